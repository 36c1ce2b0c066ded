import pytest

ACCEPTANCE_FILE = "test_acceptance.py"

CRITERIA = {
    "test_c1_gradient_fidelity":
        "C1 analytic loss gradients match central differences "
        "(5 losses x 1000 points, rel err < 1e-5, under 60 s)",
    "test_c2_closed_form_losses":
        "C2 contrastive losses hit their closed forms (ln 2 and ln 4 to 1e-9)",
    "test_c3_nms_matches_exhaustive":
        "C3 greedy NMS equals exhaustive suppression on 1000 instances "
        "(exact set and order)",
    "test_c4_metrics_match_oracles":
        "C4 retrieval/ranking/matching metrics equal brute-force oracles "
        "on 500 instances (within 1e-12)",
    "test_c5_label_round_trip":
        "C5 clip-aligned intervals survive a label round trip; curve labels "
        "mark exactly the max-bin clips",
    "test_c6_toy_overfit_perfect_retrieval":
        "C6 toy corpus overfit reaches R1@0.5 = R1@0.7 = HIT@1 = 1.0 "
        "(<= 2000 steps, under 120 s, monotone loss)",
    "test_c7_segmentation_matches_exhaustive":
        "C7 segmentation DP equals exhaustive search (videos up to 20 clips), "
        "recovers planted blocks, never violates constraints",
    "test_c8_default_config_golden":
        "C8 default configuration carries the documented golden values",
    "test_c9_cli_determinism":
        "C9 every CLI command is byte-identical across two same-seed runs",
}

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if ACCEPTANCE_FILE not in str(item.fspath):
        return
    name = item.name.split("[")[0]
    if name not in CRITERIA:
        return
    if report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    elif report.when == "setup" and report.failed:
        status = "ERROR"
    elif report.when == "setup" and report.skipped:
        status = "SKIP"
    else:
        return
    _results[name] = status


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(CRITERIA):
        if name in _results:
            terminalreporter.write_line(f"{_results[name]:5s} {CRITERIA[name]}")
