"""测试运行指纹."""

from symwatch.core.fingerprint import (
    FINGERPRINT_LENGTH,
    canonical_json,
    compute_fingerprint,
    file_digest,
    run_directory_name,
)


class TestCanonicalJson:
    """测试规范化 JSON."""

    def test_key_order_irrelevant(self):
        """测试键顺序不影响结果."""
        assert canonical_json({"b": 1, "a": [1, 2]}) == canonical_json({"a": [1, 2], "b": 1})
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


class TestFingerprint:
    """测试指纹计算."""

    def test_deterministic(self, tmp_path):
        """测试相同配置与文件得到相同指纹."""
        path = tmp_path / "panel.csv"
        path.write_text("week,area_id\n", encoding="utf-8")
        first = compute_fingerprint({"max_controls": 5}, [path, None])
        second = compute_fingerprint({"max_controls": 5}, [path, None])
        assert first == second
        assert len(first) == 64

    def test_sensitive_to_inputs(self, tmp_path):
        """测试配置、文件内容与可选文件缺失都会改变指纹."""
        path = tmp_path / "panel.csv"
        path.write_text("a\n", encoding="utf-8")
        base = compute_fingerprint({"max_controls": 5}, [path])
        assert compute_fingerprint({"max_controls": 4}, [path]) != base
        assert compute_fingerprint({"max_controls": 5}, [path, None]) != base

        path.write_text("b\n", encoding="utf-8")
        assert compute_fingerprint({"max_controls": 5}, [path]) != base

    def test_file_digest(self, tmp_path):
        """测试文件摘要与内容一致."""
        first, second = tmp_path / "x", tmp_path / "y"
        first.write_bytes(b"abc")
        second.write_bytes(b"abc")
        assert file_digest(first) == file_digest(second)
        assert file_digest(first).startswith("ba7816bf")

    def test_directory_name(self):
        """测试运行目录名截取指纹前缀."""
        name = run_directory_name("detect", "0123456789abcdef" * 4)
        assert name == "detect-0123456789ab"
        assert len(name) == len("detect-") + FINGERPRINT_LENGTH
