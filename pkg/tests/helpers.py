"""Fixture builders shared by the test modules."""

from __future__ import annotations

import hashlib
import os
import subprocess
from pathlib import Path

from crl.backends import MARKER

FIXTURES = Path(__file__).parent / "fixtures"
EINSTEIN = FIXTURES / "einsteintoolkit.th"

SVN_COMPONENTS = [
    "CactusArchive/ADM",
    "CactusBase/Boundary",
    "CactusBase/CartGrid3D",
    "CactusBase/CoordBase",
    "CactusBase/Fortran",
    "CactusBase/IOASCII",
    "CactusBase/IOBasic",
    "CactusBase/IOUtil",
    "CactusBase/InitBase",
    "CactusBase/LocalInterp",
    "CactusBase/LocalReduce",
    "CactusBase/SymBase",
    "CactusBase/Time",
]
GIT_COMPONENTS = [
    "McLachlan/ML_BSSN",
    "McLachlan/ML_BSSN_Helper",
    "McLachlan/ML_BSSN_O2",
    "McLachlan/ML_BSSN_O2_Helper",
    "McLachlan/ML_ADMConstraints",
    "McLachlan/ML_ADMQuantities",
]

MOCK_LIST = """\
!CRL_VERSION = 1.0

!DEFINE ROOT = Cactus
!DEFINE ARR  = $ROOT/arrangements

# Cactus thorns
!TARGET   = $ARR
!TYPE     = svn
!AUTH_URL = mock://auth/svn/arrangements/$1/$2/trunk
!URL      = mock://svn/arrangements/$1/$2/trunk
!CHECKOUT =
{svn}

# McLachlan, the spacetime code
!TARGET   = $ARR
!TYPE     = git
!URL      = mock://git/McLachlan
!AUTH_URL = mock://auth/git/McLachlan
!REPO_PATH= $2
!CHECKOUT =
{git}
""".format(svn="\n".join(SVN_COMPONENTS), git="\n".join(GIT_COMPONENTS))


def _component_files(base: Path, name: str, flavour: str) -> None:
    (base / "src").mkdir(parents=True, exist_ok=True)
    (base / "interface.ccl").write_text(f"# {flavour} interface of {name}\nimplements: {name}\n")
    (base / "src" / f"{name.split('/')[-1]}.c").write_text(
        f"/* {flavour} {name} */\nint main(void) {{ return 0; }}\n")
    (base / "README").write_text(f"{name} from {flavour}\n" * 3)


def build_mock_farm(root: Path) -> Path:
    """Fixture tree shaped like the Einstein Toolkit excerpt.

    13 svn components with one URL each and one git repository holding
    the six McLachlan components plus an unrequested one.
    """
    for flavour, prefix in (("anonymous", root), ("authenticated", root / "auth")):
        for comp in SVN_COMPONENTS:
            _component_files(prefix / "svn" / "arrangements" / comp / "trunk", comp, flavour)
        repo = prefix / "git" / "McLachlan"
        for comp in GIT_COMPONENTS + ["McLachlan/ML_CCZ4"]:
            _component_files(repo / comp.split("/")[1], comp, flavour)
        (repo / "README.md").write_text("McLachlan repository\n")
    (root / "lists").mkdir(parents=True, exist_ok=True)
    (root / "lists" / "einstein.th").write_text(MOCK_LIST)
    return root


def build_expected_tree(farm: Path, out: Path) -> Path:
    """The tree a complete anonymous assembly of the mock list must produce."""
    import shutil

    arr = out / "Cactus" / "arrangements"
    for comp in SVN_COMPONENTS:
        shutil.copytree(farm / "svn" / "arrangements" / comp / "trunk", arr / comp)
    for comp in GIT_COMPONENTS:
        shutil.copytree(farm / "git" / "McLachlan" / comp.split("/")[1], arr / comp)
    return out


def tree_digest(root: Path, ignore=(MARKER, ".crl")) -> dict[str, str]:
    """Map every file and directory under ``root`` to a content digest."""
    result = {}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in ignore)
        rel = Path(dirpath).relative_to(root)
        if rel != Path("."):
            result[str(rel) + "/"] = "dir"
        for name in sorted(filenames):
            if name in ignore:
                continue
            data = (Path(dirpath) / name).read_bytes()
            result[str(rel / name)] = hashlib.sha256(data).hexdigest()
    return result


def raw_tree_digest(root: Path) -> dict[str, str]:
    """Like :func:`tree_digest` but covering everything, markers included."""
    return tree_digest(root, ignore=())


GIT_ENV = {
    "GIT_AUTHOR_NAME": "CRL Test",
    "GIT_AUTHOR_EMAIL": "crl@example.org",
    "GIT_COMMITTER_NAME": "CRL Test",
    "GIT_COMMITTER_EMAIL": "crl@example.org",
    "GIT_CONFIG_NOSYSTEM": "1",
}


def git(*args: str, cwd: Path | None = None) -> str:
    env = dict(os.environ, **GIT_ENV)
    proc = subprocess.run(["git", *args], cwd=cwd, env=env, check=True,
                          stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    return proc.stdout


def make_git_repo(path: Path, commits: int, files: dict[str, str] | None = None) -> Path:
    """Create a repository with ``commits`` commits, each changing data.txt."""
    path.mkdir(parents=True)
    git("init", "-q", "-b", "main", str(path))
    for name, text in (files or {}).items():
        f = path / name
        f.parent.mkdir(parents=True, exist_ok=True)
        f.write_text(text)
    for i in range(commits):
        (path / "data.txt").write_text("".join(f"commit {j} line\n" for j in range(i + 1)))
        (path / f"file{i:03d}.txt").write_text(f"payload {i}\n" * 20)
        git("add", "-A", cwd=path)
        git("commit", "-q", "-m", f"commit {i}", cwd=path)
    return path


def git_object_count(repo: Path) -> int:
    out = git("count-objects", "-v", cwd=repo)
    stats = dict(line.split(": ") for line in out.splitlines() if ": " in line)
    return int(stats["count"]) + int(stats["in-pack"])
