int __placeholder_test_tensor;
