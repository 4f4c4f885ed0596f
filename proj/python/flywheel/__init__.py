# Copyright 2026 The Flywheel Authors
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

from ._flywheel import (
    FlywheelError,
    build_judge_prompt,
    dedupe,
    parse_judge_verdict,
    reports,
    run_cycle,
    simulate,
    split,
    traffic_bucket,
)

__all__ = [
    "FlywheelError",
    "build_judge_prompt",
    "dedupe",
    "parse_judge_verdict",
    "reports",
    "run_cycle",
    "simulate",
    "split",
    "traffic_bucket",
]
