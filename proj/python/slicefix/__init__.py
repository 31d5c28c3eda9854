# Copyright 2026 The slicefix Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Error-slice annotation, scoring and slice-aware probe training."""

from slicefix._core import (
    Dataset,
    Probe,
    SlicefixError,
    correctness,
    cosine_sim,
    encode_text,
    evaluate,
    generate_synthetic,
    load_dataset,
    load_probe,
    oracle_error_score,
    partition_class,
    run_benchmark,
    score_at_threshold,
    score_prompt,
    search_threshold,
    train_probe,
    write_dataset,
)

__all__ = [
    "Dataset",
    "Probe",
    "SlicefixError",
    "correctness",
    "cosine_sim",
    "encode_text",
    "evaluate",
    "generate_synthetic",
    "load_dataset",
    "load_probe",
    "oracle_error_score",
    "partition_class",
    "run_benchmark",
    "score_at_threshold",
    "score_prompt",
    "search_threshold",
    "train_probe",
    "write_dataset",
]
