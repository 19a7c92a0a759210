import json

import pandas as pd
import pytest

from core import DataFormatError, DataReadError, InsufficientDataError, DirectionSpec
from core.data_io import (
    OBSERVATION_COLUMNS, read_observations, read_sweep, read_directions, read_json,
    rows_to_csv, write_csv, save_rows_to_excel
)
from conftest import observation_rows

HEADER = 'direction,data_size_millions,sampling_ratio,eval_cross_entropy\n'


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_read_observations_csv(observations_csv, synthetic_observations):
    observations = read_observations(str(observations_csv))
    assert observations == synthetic_observations


def test_extra_columns_are_ignored(tmp_path):
    path = _write(tmp_path, 'log.csv', 'run,' + HEADER.replace('\n', ',note\n') + '7,hi,0.26,0.3,2.5,ok\n')
    [observation] = read_observations(path)
    assert observation.direction == 'hi'
    assert observation.data_size == 0.26
    assert observation.eval_loss == 2.5


def test_read_tab_separated_txt(tmp_path):
    text = HEADER.replace(',', '\t') + 'hi\t0.26\t0.3\t2.5\nhi\t0.26\t0.5\t2.6\n'
    observations = read_observations(_write(tmp_path, 'log.txt', text))
    assert [o.sampling_ratio for o in observations] == [0.3, 0.5]


def test_read_xlsx(tmp_path, synthetic_observations):
    path = str(tmp_path / 'log.xlsx')
    assert save_rows_to_excel(observation_rows(synthetic_observations), OBSERVATION_COLUMNS, path)
    observations = read_observations(path)
    assert len(observations) == len(synthetic_observations)
    for read, original in zip(observations, synthetic_observations):
        assert read.direction == original.direction
        assert read.eval_loss == pytest.approx(original.eval_loss, rel=1e-12)


def test_bad_value_reports_line_number(tmp_path):
    path = _write(tmp_path, 'log.csv', HEADER + 'hi,0.26,0.3,2.5\nhi,0.26,abc,2.6\n')
    with pytest.raises(DataFormatError) as info:
        read_observations(path)
    assert info.value.line == 3
    assert '第 3 行' in str(info.value)


def test_ratio_out_of_domain_reports_line_number(tmp_path):
    path = _write(tmp_path, 'log.csv', HEADER + 'hi,0.26,1.5,2.5\n')
    with pytest.raises(DataFormatError) as info:
        read_observations(path)
    assert info.value.line == 2


def test_missing_column(tmp_path):
    path = _write(tmp_path, 'log.csv', 'direction,sampling_ratio\nhi,0.3\n')
    with pytest.raises(DataFormatError, match='eval_cross_entropy'):
        read_observations(path)


@pytest.mark.parametrize('text', ['', HEADER])
def test_empty_file_has_no_observations(tmp_path, text):
    with pytest.raises(InsufficientDataError, match='no observations'):
        read_observations(_write(tmp_path, 'log.csv', text))


def test_missing_file(tmp_path):
    with pytest.raises(DataReadError):
        read_observations(str(tmp_path / 'absent.csv'))


def test_read_sweep_with_point_column(tmp_path):
    text = 'sweep,point,' + HEADER
    text += 'main,0,a,10,0.9,1.8\nmain,0,b,0.26,0.1,3.0\nmain,1,a,10,0.5,2.0\nmain,1,b,0.26,0.5,2.7\n'
    text += 'scale-1000,0,a,10,0.9,1.7\nscale-1000,0,b,1,0.1,2.9\n'
    points, names = read_sweep(_write(tmp_path, 'sweep.csv', text))
    assert names == ['a', 'b']
    assert [p.ratios for p in points] == [(0.9, 0.1), (0.5, 0.5)]
    assert points[0].losses.losses == (1.8, 3.0)
    other, _ = read_sweep(_write(tmp_path, 'sweep2.csv', text), sweep='scale-1000')
    assert len(other) == 1


def test_read_sweep_pairs_complementary_ratios(tmp_path):
    text = HEADER + 'a,10,0.7,1.9\na,10,0.3,2.2\nb,0.26,0.7,2.9\nb,0.26,0.3,2.6\n'
    points, names = read_sweep(_write(tmp_path, 'sweep.csv', text))
    assert names == ['a', 'b']
    assert [p.ratios for p in points] == [(0.7, 0.3), (0.3, 0.7)]
    assert points[0].losses.losses == (1.9, 2.6)


def test_read_sweep_without_partner_fails(tmp_path):
    text = HEADER + 'a,10,0.7,1.9\nb,0.26,0.6,2.9\n'
    with pytest.raises(DataFormatError):
        read_sweep(_write(tmp_path, 'sweep.csv', text))


def test_read_sweep_three_directions_need_point_column(tmp_path):
    text = HEADER + 'a,10,0.5,1.9\nb,1,0.3,2.9\nc,0.5,0.2,2.6\n'
    with pytest.raises(DataFormatError, match='point'):
        read_sweep(_write(tmp_path, 'sweep.csv', text))


def test_read_sweep_json(tmp_path):
    document = {'directions': ['x', 'y'],
                'points': [{'ratios': [0.4, 0.6], 'losses': [2.0, 2.1]},
                           {'ratios': [0.6, 0.4], 'losses': [1.9, 2.3]}]}
    path = _write(tmp_path, 'sweep.json', json.dumps(document))
    points, names = read_sweep(path)
    assert names == ['x', 'y']
    assert points[1].losses.losses == (1.9, 2.3)


def test_read_sweep_json_without_points(tmp_path):
    with pytest.raises(DataFormatError, match='points'):
        read_sweep(_write(tmp_path, 'sweep.json', '{"items": []}'))


def test_invalid_json_reports_line(tmp_path):
    with pytest.raises(DataFormatError) as info:
        read_json(_write(tmp_path, 'bad.json', '{\n  "a": 1,\n}'))
    assert info.value.line == 3


def test_read_directions(tmp_path):
    path = _write(tmp_path, 'dirs.json', json.dumps(
        {'directions': [{'name': 'de', 'data_size_millions': 4.6}, {'name': 'hi', 'data_size_millions': 0.26}]}))
    assert read_directions(path) == [DirectionSpec('de', 4.6), DirectionSpec('hi', 0.26)]
    with pytest.raises(DataFormatError):
        read_directions(_write(tmp_path, 'empty.json', '[]'))
    with pytest.raises(DataFormatError):
        read_directions(_write(tmp_path, 'partial.json', '[{"name": "de"}]'))


def test_csv_keeps_full_precision(tmp_path):
    value = 2.5148327659184737
    path = str(tmp_path / 'out' / 'curve.csv')
    write_csv([{'direction': 'hi', 'sampling_ratio': 0.1, 'predicted_loss': value}],
              ['direction', 'sampling_ratio', 'predicted_loss'], path)
    frame = pd.read_csv(path, float_precision='round_trip')
    assert frame['predicted_loss'][0] == value
    assert rows_to_csv([], ['a', 'b']) == 'a,b\n'


def test_write_csv_to_stdout(capsys):
    write_csv([{'a': 1, 'b': 'x'}], ['a', 'b'])
    assert capsys.readouterr().out == 'a,b\n1,x\n'
