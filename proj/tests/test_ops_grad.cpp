int __placeholder_test_ops_grad;
