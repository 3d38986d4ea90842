"""Python face of the coordination and reasoning toolkit.

Every payload crosses the extension boundary as canonical JSON text; the
helpers here only decode it for ergonomic use.
"""

import json

try:
    from . import _core
except ImportError:  # build-tree layout: extension sits next to the package
    import _core

ConfigError = _core.ConfigError
SchemaError = _core.SchemaError
TransportError = _core.TransportError
InternalError = _core.InternalError

canonical = _core.canonical
extract_entity_ids = _core.extract_entity_ids
prompt_template_names = _core.prompt_template_names
render_prompt = _core.render_prompt
run_cli = _core.run_cli
sha256_hex = _core.sha256_hex

__version__ = _core.__version__


def simulate_scene(config="", scene_index=0):
    """One synthetic scene as a dict: scene, bundle, correspondence."""
    return json.loads(_core.simulate_scene(config, scene_index))


def fuse(bundle, config="", no_ica=False):
    """Coordinate one fact bundle (dict or JSON text) into a summary dict."""
    if not isinstance(bundle, str):
        bundle = json.dumps(bundle)
    return json.loads(_core.fuse(bundle, config, no_ica))


def evaluate(summary, gt, config=""):
    """Score one summary against ground truth; returns the report dict."""
    if not isinstance(summary, str):
        summary = json.dumps(summary)
    if not isinstance(gt, str):
        gt = json.dumps(gt)
    return json.loads(_core.evaluate(summary, gt, config))


def reason(summary, query, backend="", config=""):
    """Run the verifier-audited reasoning chain; returns the result dict."""
    if not isinstance(summary, str):
        summary = json.dumps(summary)
    return json.loads(_core.reason(summary, query, backend, config))


def generate_qa(scene, n, seed=42, families=(), config=""):
    """Generate question-answer pairs; returns a list of dicts."""
    if not isinstance(scene, str):
        scene = json.dumps(scene)
    return json.loads(_core.generate_qa(scene, n, seed, list(families), config))


__all__ = [
    "ConfigError",
    "SchemaError",
    "TransportError",
    "InternalError",
    "canonical",
    "evaluate",
    "extract_entity_ids",
    "fuse",
    "generate_qa",
    "prompt_template_names",
    "reason",
    "render_prompt",
    "run_cli",
    "sha256_hex",
    "simulate_scene",
    "__version__",
]
