"""数据模型模块：Pydantic schemas."""
