"""核心模块：配置、日志、错误与运行指纹."""
