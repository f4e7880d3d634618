from .reward import coverage_reward, DEFAULT_HEIGHT_THRESHOLD, DEFAULT_REWARD_RADIUS

__all__ = ["coverage_reward", "DEFAULT_HEIGHT_THRESHOLD", "DEFAULT_REWARD_RADIUS"]
