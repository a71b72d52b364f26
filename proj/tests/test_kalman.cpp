int __placeholder_test_kalman;
