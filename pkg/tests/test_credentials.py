import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dadl.credentials import CredentialResolver, SecretValue, list_refs
from dadl.errors import FilePermissionError, MissingSecret, UnknownNamespace

SENTINEL = "leak-sentinel-9f2a"


def write_secrets(tmp_path, text, mode=0o600):
    path = tmp_path / "secrets.yaml"
    path.write_text(text)
    os.chmod(path, mode)
    return path


def test_env_namespace():
    r = CredentialResolver(env={"API_TOKEN": "tok-1"})
    assert r.resolve("env/API_TOKEN").reveal() == "tok-1"


def test_env_missing(tmp_path):
    r = CredentialResolver(env={})
    with pytest.raises(MissingSecret):
        r.resolve("env/NOPE")


def test_file_namespace(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  my-api-token: tok-2\n")
    r = CredentialResolver(path, env={})
    assert r.resolve("vault/my-api-token").reveal() == "tok-2"


def test_env_section_in_file_backfills(tmp_path):
    path = write_secrets(tmp_path, "env:\n  HUB_USER: admin\n")
    r = CredentialResolver(path, env={})
    assert r.resolve("env/HUB_USER").reveal() == "admin"


def test_process_env_wins_over_file_section(tmp_path):
    path = write_secrets(tmp_path, "env:\n  HUB_USER: from-file\n")
    r = CredentialResolver(path, env={"HUB_USER": "from-env"})
    assert r.resolve("env/HUB_USER").reveal() == "from-env"


def test_static_overrides_everything(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: from-file\n")
    r = CredentialResolver(path, env={}, static={"vault/t": "from-static"})
    assert r.resolve("vault/t").reveal() == "from-static"


def test_unknown_namespace_without_file():
    with pytest.raises(UnknownNamespace):
        CredentialResolver(env={}).resolve("vault/x")


def test_unknown_namespace_with_file(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: x\n")
    with pytest.raises(UnknownNamespace):
        CredentialResolver(path, env={}).resolve("keychain/t")


def test_missing_key(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: x\n")
    with pytest.raises(MissingSecret):
        CredentialResolver(path, env={}).resolve("vault/other")


def test_ref_without_namespace():
    with pytest.raises(UnknownNamespace):
        CredentialResolver(env={}).resolve("bare-token")


def test_world_readable_file_rejected(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: x\n", mode=0o644)
    with pytest.raises(FilePermissionError):
        CredentialResolver(path, env={}).resolve("vault/t")


def test_group_readable_file_rejected(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: x\n", mode=0o640)
    with pytest.raises(FilePermissionError):
        CredentialResolver(path, env={}).resolve("vault/t")


def test_rotation_reread_on_mtime_change(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: old-value\n")
    r = CredentialResolver(path, env={})
    assert r.resolve("vault/t").reveal() == "old-value"
    path.write_text("vault:\n  t: new-value\n")
    os.chmod(path, 0o600)
    # force a visible mtime change even on coarse-grained filesystems
    stat_result = path.stat()
    os.utime(path, (stat_result.st_atime, stat_result.st_mtime + 2))
    assert r.resolve("vault/t").reveal() == "new-value"


def test_unchanged_file_uses_cache(tmp_path):
    path = write_secrets(tmp_path, "vault:\n  t: v\n")
    r = CredentialResolver(path, env={})
    r.resolve("vault/t")
    first = r._cache
    r.resolve("vault/t")
    assert r._cache is first


def test_list_refs_devices(devices_doc):
    assert list_refs(devices_doc) == ["env/HUB_USER", "env/HUB_PASSWORD"]


def test_list_refs_minimal(minimal_doc):
    assert list_refs(minimal_doc) == ["vault/my-api-token"]


def test_preflight_raises_before_any_use(minimal_doc):
    with pytest.raises(UnknownNamespace):
        CredentialResolver(env={}).preflight(minimal_doc)
    ok = CredentialResolver(env={}, static={"vault/my-api-token": "t"})
    assert ok.preflight(minimal_doc) == ["vault/my-api-token"]


class TestRedaction:
    def test_repr_and_str_redacted(self):
        secret = SecretValue("vault/t", SENTINEL)
        assert SENTINEL not in repr(secret)
        assert SENTINEL not in str(secret)
        assert SENTINEL not in f"oops: {secret}"
        assert "vault/t" in repr(secret)

    def test_errors_never_carry_values(self, tmp_path):
        path = write_secrets(tmp_path, f"vault:\n  t: {SENTINEL}\n")
        r = CredentialResolver(path, env={})
        r.resolve("vault/t")
        with pytest.raises(MissingSecret) as exc:
            r.resolve("vault/absent")
        assert SENTINEL not in str(exc.value)

    def test_equality_by_value(self):
        a = SecretValue("vault/a", "same")
        b = SecretValue("vault/b", "same")
        c = SecretValue("vault/a", "different")
        assert a == b
        assert a != c

    @given(st.text(min_size=1, max_size=30))
    def test_repr_is_fixed_redacted_form(self, value):
        secret = SecretValue("ns/key", value)
        assert repr(secret) == "<secret ns/key>"
        assert str(secret) == "<secret ns/key>"
