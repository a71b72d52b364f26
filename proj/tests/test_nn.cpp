int __placeholder_test_nn;
