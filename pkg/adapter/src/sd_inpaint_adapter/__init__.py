"""Backend adapter exposing an inpainting image model over the
patternforge backend protocol (version 1).

The adapter is deliberately independent of the patternforge package: it
speaks the documented wire protocol and PBM file format only, so it can run
as an external process against any conforming client.
"""

__version__ = "0.1.0"

from .model import AdapterConfig, make_inpainter
from .pbm import load_pbm, save_pbm

__all__ = ["AdapterConfig", "make_inpainter", "load_pbm", "save_pbm"]
