"""服务模块：面板、匹配、异常度量、评估与合成数据."""
