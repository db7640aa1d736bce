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
"""Stereo matching with semantic cues on synthetic nadir scenes."""

from semstereo._core import (
    category_stats,
    class_names,
    evaluate,
    generate_dataset,
    generate_scene,
    gradcheck,
    infer,
    level_values,
    load_sample,
    scene_config,
    seg_metrics,
    stereo_metrics,
    train,
)

__all__ = [
    "category_stats",
    "class_names",
    "evaluate",
    "generate_dataset",
    "generate_scene",
    "gradcheck",
    "infer",
    "level_values",
    "load_sample",
    "scene_config",
    "seg_metrics",
    "stereo_metrics",
    "train",
]
