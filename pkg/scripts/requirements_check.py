#!/usr/bin/env python3
"""
Requirements checker for the multi-intent detection toolkit.
Checks if all required dependencies are available.
"""

import importlib
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


def check_requirement(module_name, description, required=True):
    """Check if a module can be imported."""
    try:
        importlib.import_module(module_name)
        print(f"✅ {module_name}: {description}")
        return True
    except ImportError:
        status = "❌" if required else "⚠️ "
        req_text = "REQUIRED" if required else "OPTIONAL"
        print(f"{status} {module_name}: {description} ({req_text})")
        return False


def main():
    """Check all requirements."""
    print("🔍 Checking multi-intent detection requirements...\n")

    print("📦 Core Requirements:")
    core_available = True
    core_available &= check_requirement("torch", "Model training and inference", required=True)
    core_available &= check_requirement("sklearn", "Accuracy and macro-F1 scoring", required=True)
    core_available &= check_requirement("click", "CLI framework", required=True)
    core_available &= check_requirement("loguru", "Logging", required=True)
    core_available &= check_requirement("pydantic", "Configuration models", required=True)
    core_available &= check_requirement("pydantic_settings", "Environment settings", required=True)
    core_available &= check_requirement("jinja2", "Template engine for reports", required=True)
    core_available &= check_requirement("pytest", "Testing framework", required=True)

    print("\n🤖 Encoder Adapters:")
    check_requirement("transformers", "Pretrained encoders for the hf adapter", required=False)

    print("\n📊 Summary:")
    if core_available:
        print("✅ Core toolkit is ready to use!")
    else:
        print("❌ Some core requirements are missing")
        print("Run: pip install -r requirements_minimal.txt")

    print("\n🚀 To install missing dependencies:")
    print("   Basic: pip install -r requirements_minimal.txt")
    print("   HF:    pip install transformers")

    return 0 if core_available else 1


if __name__ == "__main__":
    sys.exit(main())
