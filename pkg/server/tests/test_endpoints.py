from http.client import (
    BAD_REQUEST,
    INTERNAL_SERVER_ERROR,
    NOT_FOUND,
    OK,
    UNPROCESSABLE_ENTITY,
)

from unittest.mock import patch

import pytest

import server.endpoints as ep
import linalg.solvers as slv

TEST_CLIENT = ep.app.test_client()


def test_endpoints():
    resp = TEST_CLIENT.get(ep.ENDPOINT_EP)
    resp_json = resp.get_json()
    assert ep.ENDPOINT_RESP in resp_json
    assert ep.SOLVE_EP in resp_json[ep.ENDPOINT_RESP]


def test_health():
    resp = TEST_CLIENT.get(ep.HEALTH_EP)
    assert resp.status_code == OK
    assert resp.get_json()['status'] == 'ok'


def test_get_mesh():
    resp = TEST_CLIENT.get(f'{ep.MESHES_EP}/square/0')
    assert resp.status_code == OK
    resp_json = resp.get_json()
    assert resp_json['triangles'] == 9
    assert resp_json['boundary_edges'] == 9
    assert resp_json['diagnostics'] == []


@pytest.mark.parametrize('path', ['/hexagon/0', '/square/99'])
def test_get_mesh_bad_request(path):
    resp = TEST_CLIENT.get(ep.MESHES_EP + path)
    assert resp.status_code == BAD_REQUEST
    assert ep.ERROR in resp.get_json()


def test_get_mesh_not_found():
    resp = TEST_CLIENT.get(f'{ep.MESHES_EP}/square/level')
    assert resp.status_code == NOT_FOUND


def test_solve():
    resp = TEST_CLIENT.post(ep.SOLVE_EP, json={'domain': 'square',
                                               'level': 0, 'alpha': 1.0})
    assert resp.status_code == OK
    resp_json = resp.get_json()
    assert len(resp_json['control']) == 9
    assert resp_json['boundary_edges'] == 9
    assert resp_json['kkt_residual'] >= 0


@pytest.mark.parametrize('data', [
    {'bounds': [1.0]},
    {'bounds': [1.0, 0.0]},
    {'problem': 'custom'},
    {'level': -1},
    {'alpha': 0.0},
    {'alpha': None},
    {'alpha': [1.0]},
    {'alpha': '1.0'},
    {'alpha': True},
    {'tol': 'small'},
    {'bounds': ['low', 1.0]},
    {'bounds': [None, 1.0]},
    {'level': True},
    {'level': 0.5},
    [1, 2],
])
def test_solve_bad_request(data):
    resp = TEST_CLIENT.post(ep.SOLVE_EP, json=data)
    assert resp.status_code == BAD_REQUEST


@patch('optimizer.control_problem.solve_control',
       side_effect=slv.SolverError('no convergence'))
def test_solve_failure(mock_solve):
    resp = TEST_CLIENT.post(ep.SOLVE_EP, json={})
    assert resp.status_code == UNPROCESSABLE_ENTITY
    assert 'no convergence' in resp.get_json()[ep.ERROR]


@patch('optimizer.control_problem.solve_control',
       side_effect=RuntimeError('boom'))
def test_solve_unexpected_error(mock_solve):
    resp = TEST_CLIENT.post(ep.SOLVE_EP, json={})
    assert resp.status_code == INTERNAL_SERVER_ERROR


def test_operators():
    resp = TEST_CLIENT.get(f'{ep.OPERATORS_EP}?levels=2&domain=pentagon')
    assert resp.status_code == OK
    levels = resp.get_json()['levels']
    assert [row['boundary_edges'] for row in levels] == [5, 11]


@patch('harness.study.operator_report', return_value=[])
def test_operators_default(mock_report):
    resp = TEST_CLIENT.get(ep.OPERATORS_EP)
    assert resp.status_code == OK
    assert resp.get_json() == {'levels': []}
    mock_report.assert_called_once()


@pytest.mark.parametrize('query', ['levels=99', 'levels=0',
                                   'domain=hexagon'])
def test_operators_bad_request(query):
    resp = TEST_CLIENT.get(f'{ep.OPERATORS_EP}?{query}')
    assert resp.status_code == BAD_REQUEST


def test_oracle_check():
    resp = TEST_CLIENT.post(ep.ORACLE_EP, json={'domain': 'pentagon',
                                                'instances': 1})
    assert resp.status_code == OK
    resp_json = resp.get_json()
    assert resp_json['boundary_edges'] == 5
    assert resp_json['max_deviation'] <= 1e-8


@pytest.mark.parametrize('data', [
    {'instances': 0},
    {'instances': True},
    {'instances': ep.cfg.MAX_ORACLE_INSTANCES + 1},
    {'seed': 'abc'},
    {'seed': -1},
    {'level': False},
])
def test_oracle_check_bad_request(data):
    resp = TEST_CLIENT.post(ep.ORACLE_EP, json=data)
    assert resp.status_code == BAD_REQUEST
