import _nmsynth
def test_version():
    assert _nmsynth.__version__
