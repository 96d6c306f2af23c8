"""Ground-target localization from a UAV camera with monocular depth priors."""

__version__ = "0.1.0"
