"""测试模块."""



