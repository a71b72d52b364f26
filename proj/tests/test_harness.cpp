int __placeholder_test_harness;
