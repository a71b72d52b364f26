int __placeholder_test_analysis;
