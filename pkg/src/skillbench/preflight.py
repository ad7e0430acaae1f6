import os
import sys
import json
import logging
import importlib.util
from pathlib import Path
from typing import Any, Dict, List, Optional

import requests
from dotenv import load_dotenv

from .constants import API_KEY_ENV

logger = logging.getLogger(__name__)

REQUIRED_MODULES = ["requests", "numpy", "scipy", "pandas", "sklearn", "yaml", "dotenv"]


def load_env_file(path: Optional[str] = None) -> bool:
    """Load `.env` from the working directory; never overrides variables already set."""
    env_path = Path(path) if path else Path.cwd() / ".env"
    if not env_path.exists():
        return False
    return load_dotenv(env_path, override=False)


def check_module(name: str) -> str:
    return "ok" if importlib.util.find_spec(name) is not None else "missing"


def endpoint_reachable(endpoint: str, timeout_sec: float = 5.0) -> Dict[str, Any]:
    """GET <endpoint>/models, the listing route of OpenAI-compatible servers."""
    url = endpoint.rstrip("/") + "/models"
    headers = {}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        response = requests.get(url, headers=headers, timeout=timeout_sec)
    except requests.RequestException as e:
        logger.warning(f"Endpoint probe failed: {url}: {e}")
        return {"url": url, "ok": False, "error": str(e)}
    return {"url": url, "ok": response.status_code < 400, "status": response.status_code}


def run_checks(endpoint: Optional[str] = None, env_file: Optional[str] = None) -> Dict[str, Any]:
    load_env_file(env_file)

    results: Dict[str, Any] = {
        "python": {"interpreter_path": sys.executable, "version": sys.version.split()[0]},
        "modules": {name: check_module(name) for name in REQUIRED_MODULES},
        "keys": {},
        "network": {},
        "summary": {"errors": []},
    }
    errors: List[str] = results["summary"]["errors"]

    for mod, status in results["modules"].items():
        if status != "ok":
            errors.append(f"missing module: {mod}")

    # the key is optional for local servers: warn only
    results["keys"] = {"checked": API_KEY_ENV, "present": bool(os.environ.get(API_KEY_ENV))}

    if endpoint:
        probe = endpoint_reachable(endpoint)
        results["network"]["endpoint"] = probe
        if not probe["ok"]:
            errors.append(f"endpoint not reachable: {probe['url']}")

    results["summary"]["ok"] = len(errors) == 0
    return results


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    endpoint = None
    if "--endpoint" in argv:
        idx = argv.index("--endpoint")
        endpoint = argv[idx + 1] if idx + 1 < len(argv) else None
    results = run_checks(endpoint)
    print(json.dumps(results, indent=2))
    return 0 if results["summary"]["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
