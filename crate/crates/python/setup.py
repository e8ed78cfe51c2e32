"""Builds the fmcodec_py extension by delegating to cargo.

The crate compiles to a cdylib; this copies it to the name and place
setuptools expects, so `pip install -e . --no-build-isolation` works
without Rust-specific build backends.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

CRATE_DIR = Path(__file__).parent.resolve()


class CargoBuild(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "fmcodec-py"],
            check=True,
            cwd=CRATE_DIR,
        )
        built = CRATE_DIR.parent.parent / "target" / "release" / "libfmcodec_py.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[Extension("fmcodec_py", sources=[])],
    cmdclass={"build_ext": CargoBuild},
)
