"""Real-model detector/inpainter service for the artifact backend protocol."""

from .engines import ProceduralInpaintEngine, SidecarDetectorEngine
from .service import AdapterBackend, AdapterServer
from .wire import DetectRequest, InpaintRequest, InpaintSettings, WireError

__version__ = "0.1.0"
