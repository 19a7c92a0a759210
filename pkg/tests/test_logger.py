import logging

from utils import get_logger, set_verbose, set_command, info


def test_singleton():
    assert get_logger() is get_logger()
    assert get_logger().logger.propagate is False


def test_records_carry_command_name(log_records):
    set_command('predict')
    info("预测完成")
    set_command(None)
    info("空闲")
    assert [r.command for r in log_records] == ['predict', '-']
    assert log_records[0].module == 'test_logger'


def test_verbose_switches_console_level():
    set_verbose(True)
    assert get_logger().console_handler.level == logging.DEBUG
    set_verbose(False)
    assert get_logger().console_handler.level == logging.INFO
