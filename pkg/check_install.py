#!/usr/bin/env python3
"""Check that the cocycle lab is installed and configured correctly"""

import sys

# Test imports
try:
    from arithmetic import golden
    from cocycle import CocycleMap, lyapunov
    from config import config
    from kam import Su11Constant
    print("✓ Library imports successful")
except ImportError as e:
    print(f"✗ Import error: {e}")
    sys.exit(1)

# Test configuration
try:
    settings = config['default']
    real, _ = settings.get_precision_dtype()
    print(f"✓ Configuration loaded (precision: {settings.PRECISION}, dtype: {real.__name__})")
except Exception as e:
    print(f"✗ Configuration error: {e}")
    sys.exit(1)

# Test a small computation
try:
    alpha = golden()
    estimate = lyapunov(CocycleMap.almost_mathieu(alpha, 2.0, 0.0), 500)
    A = Su11Constant.from_rotation(alpha.value / 2)
    print(f"✓ Lyapunov exponent at lambda=2: {estimate.value:.4f} (expected about 0.6931)")
    print(f"✓ Rotation constant decomposed ({A.kind}, xi={A.xi_turns:.6f} turns)")
except Exception as e:
    print(f"✗ Computation error: {e}")
    sys.exit(1)

print("\n✅ All checks passed! You can run experiments with:")
print("   python cli.py gaps --lambda 0.5")
