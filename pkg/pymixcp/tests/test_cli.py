import logging

import numpy as np

from pymixcp.cli import EXIT_ERROR, EXIT_OK, main
from pymixcp.tensor import FactorSet, relative_error
from pymixcp.tensor_io import read_factors, read_tensor, read_trace, \
    write_factors
from pymixcp.optimizer import PYMIXCP_TQDM_CONFIG

PYMIXCP_TQDM_CONFIG['disable'] = True


def _pairs(line):
    return dict(item.split('=', 1) for item in line.split())


def _last_line(capsys):
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_cost(capsys):
    assert main(['cost', '3', '8']) == EXIT_OK
    out = _pairs(_last_line(capsys))
    assert out['normalized_cost'] == '0.21875'


def test_cost_invalid(capsys):
    assert main(['cost', '3', '16']) == EXIT_ERROR


def test_rankbound(capsys):
    assert main(['rankbound', '4', '3', '3']) == EXIT_OK
    assert _last_line(capsys) == 'r3=4 rm=4'


def test_rankbound_domain_error(capsys):
    assert main(['rankbound', '4', '3', '2']) == EXIT_ERROR


def test_generate(tmp_path, capsys):
    out = str(tmp_path / 'toy.dten')
    assert main(['generate', '--dims', '2', '2', '--rank', '1',
                 '--seed', '3', '--out', out]) == EXIT_OK
    a = read_tensor(out)
    assert a.dims == (2, 2)
    truth = read_factors(out)
    assert truth.rank == 1
    assert relative_error(a, truth) == 0.0
    pairs = _pairs(_last_line(capsys))
    assert pairs['bytes'] == str(16 + 2 * 8 + 4 * 8)


def test_generate_deterministic(tmp_path):
    paths = [str(tmp_path / name) for name in ('a.dten', 'b.dten')]
    for path in paths:
        assert main(['generate', '--dims', '4', '3', '2', '--rank', '2',
                     '--seed', '5', '--out', path]) == EXIT_OK
    with open(paths[0], 'rb') as fa, open(paths[1], 'rb') as fb:
        assert fa.read() == fb.read()


def test_generate_memory_cap(tmp_path):
    out = str(tmp_path / 'big.dten')
    assert main(['generate', '--dims', '100', '100', '100', '--rank', '2',
                 '--memory-cap', '1000', '--out', out]) == EXIT_ERROR


def test_decompose_rank_one(tmp_path, capsys):
    tensor = str(tmp_path / 'toy.dten')
    assert main(['generate', '--dims', '3', '3', '3', '--rank', '1',
                 '--seed', '0', '--out', tensor]) == EXIT_OK
    traces = []
    for name in ('t1.csv', 't2.csv'):
        trace = str(tmp_path / name)
        code = main(['decompose', tensor, '--rank', '1', '--q1-format',
                     'fp64', '--q2-format', 'fp64', '--eps1', '0.5',
                     '--eps2', '1e-6', '--alpha-sgd', '0.05', '--sample-frac',
                     '1.0', '--seed', '1', '--trace-out', trace,
                     '--factors-out', str(tmp_path / 'fit')])
        assert code == EXIT_OK
        pairs = _pairs(_last_line(capsys))
        assert pairs['status'] == 'converged'
        assert float(pairs['rel_error']) <= 1e-6
        traces.append(trace)
    with open(traces[0], 'rb') as fa, open(traces[1], 'rb') as fb:
        assert fa.read() == fb.read()
    trace = read_trace(traces[0])
    assert trace.records[0].iteration == 0
    assert read_factors(tmp_path / 'fit').dims == (3, 3, 3)


def test_decompose_malformed(tmp_path, caplog):
    bad = tmp_path / 'bad.dten'
    bad.write_bytes(b'NOPE' + bytes(12))
    with caplog.at_level(logging.ERROR):
        assert main(['decompose', str(bad), '--rank', '1']) == EXIT_ERROR
    assert 'byte offset 0' in caplog.text


def test_convexity_duplicated_columns(tmp_path, capsys):
    rng = np.random.default_rng(0)
    cols = [rng.standard_normal((n, 1)) for n in (5, 4, 3)]
    for u in cols[1:]:
        u[0] = 1.0
    prefix = str(tmp_path / 'dup')
    write_factors(FactorSet([np.hstack([u, u]) for u in cols]), prefix)
    assert main(['convexity', prefix]) == EXIT_OK
    assert _pairs(_last_line(capsys))['verdict'] == 'deficient'


def test_experiment_precision(tmp_path, capsys):
    out_dir = tmp_path / 'sweep'
    assert main(['experiment', 'precision', '--dims', '5', '5', '5',
                 '--rank', '2', '--formats', 'int8', 'fp64',
                 '--max-iters', '20', '--out-dir', str(out_dir)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert [_pairs(line)['label'] for line in lines] == ['INT8', 'FP64']
    assert (out_dir / 'INT8-seed0.csv').exists()
    assert (out_dir / 'summary.csv').exists()


def test_experiment_signsgd(tmp_path, capsys):
    out_dir = tmp_path / 'sign'
    assert main(['experiment', 'signsgd', '--dims', '4', '4', '4',
                 '--rank', '2', '--magnitudes', '1.0', '--max-iters', '10',
                 '--out-dir', str(out_dir)]) == EXIT_OK
    assert (out_dir / 'with-sign-max1-seed0.csv').exists()
    assert (out_dir / 'without-sign-max1-seed0.csv').exists()
