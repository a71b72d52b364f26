int __placeholder_test_optim;
