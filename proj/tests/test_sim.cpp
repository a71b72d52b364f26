int __placeholder_test_sim;
