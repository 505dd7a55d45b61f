"""dermdx: multimodal skin-disease classification toolkit.

Subsystems: dataset forging (`dermdx.forge`), narrative corpus handling
(`dermdx.corpus`), vision training/evaluation (`dermdx.vision`), option-chain
text classification (`dermdx.textchain`), and the fused diagnosis service
(`dermdx.fusion`, `dermdx.service`).
"""

from dermdx.registry import ClassRegistry, skin26_registry

__all__ = ["ClassRegistry", "skin26_registry"]
__version__ = "0.1.0"
