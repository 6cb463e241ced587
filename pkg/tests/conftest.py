import os
import shutil
import subprocess

import pytest

from changematch.corpus import Change, CorpusDocument, Label


def git(repo, *args, env_ts=None):
    env = dict(os.environ)
    env.update(
        GIT_AUTHOR_NAME="Dev",
        GIT_AUTHOR_EMAIL="dev@example.com",
        GIT_COMMITTER_NAME="Dev",
        GIT_COMMITTER_EMAIL="dev@example.com",
        GIT_CONFIG_GLOBAL=os.devnull,
        GIT_CONFIG_NOSYSTEM="1",
    )
    if env_ts is not None:
        env["GIT_AUTHOR_DATE"] = f"@{env_ts} +0000"
        env["GIT_COMMITTER_DATE"] = f"@{env_ts} +0000"
    out = subprocess.run(["git", "-C", str(repo), *args], env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


class FixtureRepo:
    def __init__(self, path):
        self.path = path
        git(path, "init", "-q", "-b", "main")

    def commit(self, files, ts, message="change"):
        for name, content in files.items():
            target = self.path / name
            target.parent.mkdir(parents=True, exist_ok=True)
            if content is None:
                target.unlink()
            elif isinstance(content, bytes):
                target.write_bytes(content)
            else:
                target.write_text(content)
        git(self.path, "add", "-A")
        git(self.path, "commit", "-q", "-m", message, env_ts=ts)
        return git(self.path, "rev-parse", "HEAD")


@pytest.fixture
def fixture_repo(tmp_path):
    if shutil.which("git") is None:
        pytest.skip("git not available")
    repo = tmp_path / "repo"
    repo.mkdir()
    return FixtureRepo(repo)


def doc(commit_hash, lines, label="clean", ts=0, path="a.java"):
    return CorpusDocument(
        commit_hash=commit_hash,
        file_path=path,
        lines_added=tuple(lines),
        lines_deleted=(),
        label=Label(label),
        author_ts=ts,
    )


def change(lines, commit_hash="probe", path="p.java"):
    return Change(commit_hash, path, tuple(lines))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
