# Copyright 2026 The SemStereo Desk Authors. All Rights Reserved.
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
"""Runs the bundled command-line tool: python -m semstereo gen --out ..."""

import os
import sys


def main() -> int:
    exe = os.path.join(os.path.dirname(__file__), "bin", "semstereo")
    if not os.path.exists(exe):
        sys.stderr.write("semstereo executable not bundled with this install\n")
        return 1
    os.execv(exe, [exe] + sys.argv[1:])
    return 1


if __name__ == "__main__":
    sys.exit(main())
