import pytest

from wavesynth.classifier import ChannelFamily, WaveformTask, train_classifier


@pytest.fixture(scope="session")
def mla_classifier():
    """Default MLA classifier, trained once per session on the high-SNR preset."""
    return train_classifier(WaveformTask.mla(), ChannelFamily("high_snr_train", 1), seed=0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    missing = [n for n in range(1, 11) if n not in results]
    if missing:
        terminalreporter.write_line(f"not run or errored before reporting: {missing}")
