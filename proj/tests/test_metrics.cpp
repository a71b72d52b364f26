int __placeholder_test_metrics;
