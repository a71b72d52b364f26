int __placeholder_test_losses;
