int __placeholder_test_audio;
