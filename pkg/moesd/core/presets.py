"""
Architecture, hardware and grid presets.

Each preset is a plain dict so scenario files and tests can build typed
records from it with `MoEArch(**MOE_ARCHITECTURES[name])`.
"""

# Expert layouts of the MoE models the activation statistics are checked on
MOE_ARCHITECTURES = {
    "qwen1.5-moe": {"total_experts": 60, "active_per_token": 4, "label": "Qwen1.5-MoE-A2.7B"},
    "deepseek-v2-lite": {"total_experts": 62, "active_per_token": 6, "label": "Deepseek-V2-Lite"},
    "qwen2-57b-a14b": {"total_experts": 64, "active_per_token": 8, "label": "Qwen2-57B-A14B"},
    "mixtral-8x7b": {"total_experts": 8, "active_per_token": 2, "label": "Mixtral-8x7B"},
}

# Architectures used by the Monte Carlo agreement suite
VALIDATION_ARCHITECTURES = ("qwen1.5-moe", "deepseek-v2-lite", "qwen2-57b-a14b")

HARDWARE = {
    "a100-80g": {"peak_compute": 312e12, "peak_bandwidth": 2.039e12, "gpu_count": 1, "label": "A100-80G"},
    "h100-sxm": {"peak_compute": 989e12, "peak_bandwidth": 3.35e12, "gpu_count": 1, "label": "H100-SXM"},
    "rtx-4090": {"peak_compute": 165e12, "peak_bandwidth": 1.008e12, "gpu_count": 1, "label": "RTX-4090"},
}

# Profiling grid: 6 K values x 2 draft lengths x 19 batch sizes = 228 rows
DEFAULT_GRID = {
    "k_values": [1, 2, 4, 8, 12, 16],
    "gammas": [2, 4],
    "batch_sizes": [1, 2, 4, 8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48, 52, 56, 60, 80, 100],
    "total_experts": 64,
}

DEFAULT_SATURATION_RATIO = 0.95
MIN_FIT_MEASUREMENTS = 10
ROBUST_RANGE_DECAY = 2 ** 0.5

# Known-truth calibration scenario for synthesize -> fit round trips.
# Volumes put the loading-time lower bounds at bias 5e-3, k2 7e-4, draft_bias 5e-4.
REFERENCE_HARDWARE = {"peak_compute": 312e12, "peak_bandwidth": 2e12, "gpu_count": 1, "label": "reference"}
REFERENCE_VOLUMES = {
    "dense_param_count": 5e9,
    "expert_param_count": 7e8,
    "draft_param_count": 5e8,
    "bitwidth": 16,
}
REFERENCE_PARAMS = {
    "bias": 8e-3,
    "k1": 1e-3,
    "k2": 1e-3,
    "k3": 5e-4,
    "draft_bias": 1e-3,
    "draft_k": 2e-4,
    "reject_bias": 5e-4,
    "reject_k": 1e-5,
    "lambda": 0.4,
    "s": 1.02,
}
REFERENCE_REJECT_CEILING = 2e-3
REFERENCE_ACCEPTANCE = 0.8

# Ridge point 16, so lambda = 0.5 puts the growth transition at 8 tokens
TREND_HARDWARE = {"peak_compute": 32e12, "peak_bandwidth": 2e12, "gpu_count": 1, "label": "trend"}

# Expert loading and expert compute dominate: speedup rises then falls with B
FFN_DOMINATED_PARAMS = {
    "bias": 0.1,
    "k1": 0.01,
    "k2": 1.0,
    "k3": 0.5,
    "draft_bias": 0.5,
    "draft_k": 0.01,
    "reject_bias": 0.1,
    "reject_k": 0.001,
    "lambda": 0.5,
    "s": 1.5,
}

# Fixed loading and dense compute dominate: speedup only decreases with B
ATTENTION_DOMINATED_PARAMS = {
    "bias": 1.0,
    "k1": 0.5,
    "k2": 0.01,
    "k3": 0.01,
    "draft_bias": 0.1,
    "draft_k": 0.1,
    "reject_bias": 0.01,
    "reject_k": 0.001,
    "lambda": 0.5,
    "s": 1.1,
}
