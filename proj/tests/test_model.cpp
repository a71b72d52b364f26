int __placeholder_test_model;
