import json
from pathlib import Path

import pytest
from PIL import Image

from hadm_adapter.engines import ProceduralInpaintEngine, SidecarDetectorEngine
from hadm_adapter.service import AdapterBackend, AdapterServer

# The protocol goldens are shared with the toolkit's mock backend; they are
# consumed as files, which is the cross-package compatibility contract.
GOLDENS_DIR = Path(__file__).parent.parent.parent / "tests" / "goldens"


def _write_image(path: Path, size=(256, 320), color=(120, 140, 160)) -> Path:
    Image.new("RGB", size, color).save(path, format="PNG")
    return path


@pytest.fixture(scope="session")
def images_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("images")
    _write_image(root / "img-1.png")
    (root / "img-1.png.detections.json").write_text(
        json.dumps(
            {
                "local": [
                    {"bbox": [10.0, 10.0, 50.0, 40.0], "category_id": 4, "score": 0.8},
                    {"bbox": [100.0, 20.0, 30.0, 30.0], "category_id": 3, "score": 0.3},
                ],
                "global": [
                    {"bbox": [5.0, 5.0, 200.0, 300.0], "category_id": 9, "score": 0.6}
                ],
            }
        ),
        encoding="utf-8",
    )
    _write_image(root / "img-clean.png")
    _write_image(root / "img-rogue.png")
    (root / "img-rogue.png.detections.json").write_text(
        json.dumps({"local": [{"bbox": [0.0, 0.0, 10.0, 10.0], "category_id": 9, "score": 0.7}]}),
        encoding="utf-8",
    )
    return root


@pytest.fixture(scope="session")
def backend(images_root) -> AdapterBackend:
    return AdapterBackend(
        images_root=images_root,
        detector=SidecarDetectorEngine(),
        inpainter=ProceduralInpaintEngine(images_root / "outputs"),
        model_tag="hadm-adapter-test",
    )


@pytest.fixture(scope="session")
def server(backend):
    with AdapterServer(backend) as srv:
        yield srv


def load_conformance_cases() -> list[dict]:
    cases = []
    for path in sorted((GOLDENS_DIR / "protocol").glob("*.json")):
        case = json.loads(path.read_text(encoding="utf-8"))
        if not case["mock_only"]:
            cases.append(case)
    return cases
