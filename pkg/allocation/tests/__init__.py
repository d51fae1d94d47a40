# Test suite for the fairshare allocation app
