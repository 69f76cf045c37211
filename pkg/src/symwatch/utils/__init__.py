"""工具模块：文件输出与图表渲染."""
