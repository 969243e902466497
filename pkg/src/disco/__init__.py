"""disco: a shared-autonomy engine that turns corrupted pilot inputs into
expert-like action sequences with a diffusion policy — seeding, inpainting,
and blending pilot actions under a receding-horizon real-time loop — plus
desk-scale tasks, surrogate pilots, and an evaluation harness.
"""

__version__ = "0.1.0"

from .kernels import backend_name  # noqa: F401
