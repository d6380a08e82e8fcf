import sys
import traceback


def check_imports():
    """Import every module to identify missing dependencies early"""
    checks = []

    for name in ('numpy', 'scipy', 'dotenv'):
        try:
            __import__(name)
            checks.append((name, True, "OK"))
        except Exception as e:
            checks.append((name, False, str(e)))

    for name in ('operators', 'states', 'criteria', 'gaussian', 'search', 'oracles', 'main'):
        try:
            __import__(name)
            checks.append((name, True, "OK"))
        except Exception as e:
            checks.append((name, False, str(e)))

    return checks


def check_singlet():
    """The singlet must violate the prl02 product criterion with margin 4"""
    try:
        from criteria import prl02_product_check
        from operators import preset_pairs
        from states import BellState, CriterionConfig, bell_state
        pair = preset_pairs(2)['xy']
        verdict = prl02_product_check(bell_state(BellState.PSI_MINUS), (pair, pair), CriterionConfig(1, 1, 1, 1))
        if verdict.violated and abs(verdict.margin - 4.0) < 1e-9:
            return True, f"margin {verdict.margin:.12g}"
        return False, f"unexpected verdict {verdict.to_dict()}"
    except Exception as e:
        return False, f"Singlet check error: {e}"


def test_imports():
    for name, success, message in check_imports():
        assert success, f"{name}: {message}"


def test_singlet():
    success, message = check_singlet()
    assert success, message


def main():
    print("=== entwit Startup Test ===\n")

    print("Testing imports...")
    failed = False
    for name, success, message in check_imports():
        status = "✅" if success else "❌"
        print(f"{status} {name}: {message}")
        failed = failed or not success

    print("\nTesting singlet witness...")
    success, message = check_singlet()
    status = "✅" if success else "❌"
    print(f"{status} Singlet: {message}")
    failed = failed or not success

    print("\nTesting CLI parser...")
    try:
        import main as cli
        cli.build_parser().parse_args(['boundary', '--otilde', '1'])
        print("✅ CLI: parser built successfully")
    except Exception as e:
        print(f"❌ CLI: {e}")
        traceback.print_exc()
        failed = True

    print("\n=== Test Complete ===")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
