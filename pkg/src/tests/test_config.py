import pytest

from eulerncl.config import DEFAULT_ORDER_CAP, Config, active_config, configured


class TestConfig:
    def test_defaults(self):
        assert active_config().order_cap == DEFAULT_ORDER_CAP
        assert active_config().output_format == "text"

    @pytest.mark.parametrize(
        "kwargs",
        [{"order_cap": 0}, {"gcd_threshold": 0}, {"output_format": "yaml"}, {"jobs": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            Config(**kwargs)

    def test_configured_restores(self):
        before = active_config()
        with configured(Config(order_cap=4)) as config:
            assert active_config() is config
            with configured(Config(order_cap=5)):
                assert active_config().order_cap == 5
            assert active_config().order_cap == 4
        assert active_config() is before

    def test_restored_after_error(self):
        before = active_config()
        with pytest.raises(RuntimeError):
            with configured(Config(jobs=3)):
                raise RuntimeError
        assert active_config() is before

    def test_fixture(self, active):
        assert active_config() is active
        assert active.order_cap == 10
