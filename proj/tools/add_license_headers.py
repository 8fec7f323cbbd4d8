#!/usr/bin/env python3
# Copyright 2026 The stnface Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""Prepends the Apache-2.0 header to every source file that lacks one."""

import argparse
import pathlib

YEAR = 2026
OWNER = "The stnface Authors"

BODY = f"""Copyright {YEAR} {OWNER}. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License."""

RULE = "=" * 78

C_HEADER = "/* " + BODY + "\n" + RULE + "*/\n\n"
HASH_HEADER = "\n".join(("# " + l).rstrip() for l in BODY.splitlines()) + "\n# " + RULE + "\n\n"

C_SUFFIXES = {".cpp", ".hpp", ".cc", ".h"}
HASH_SUFFIXES = {".py", ".cmake"}
DIRS = ["src", "include", "tests", "tools", "bench"]


def header_for(path):
    if path.suffix in C_SUFFIXES:
        return C_HEADER
    if path.suffix in HASH_SUFFIXES or path.name == "CMakeLists.txt":
        return HASH_HEADER
    return None


def apply(path, check):
    header = header_for(path)
    if header is None:
        return False
    text = path.read_text()
    if "Licensed under the Apache License" in text[:2000]:
        return False
    if check:
        return True
    shebang = ""
    if text.startswith("#!"):
        shebang, _, text = text.partition("\n")
        shebang += "\n"
    path.write_text(shebang + header + text)
    return True


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=pathlib.Path, default=pathlib.Path(__file__).resolve().parents[1])
    ap.add_argument("--check", action="store_true", help="list files missing a header, change nothing")
    args = ap.parse_args()

    files = [args.root / "CMakeLists.txt"]
    for d in DIRS:
        files += sorted(p for p in (args.root / d).rglob("*") if p.is_file())
    touched = [p for p in files if apply(p, args.check)]
    for p in touched:
        print(p.relative_to(args.root))
    if args.check and touched:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
