import warnings

import numpy as np
import pytest

from elastorecon.fem import Field, interpolate
from elastorecon.measurements import (AliasingWarning, FieldFileError, MeasurementSet, add_noise, noise_bound,
                                      noise_profile, read_field, read_header, write_field)
from elastorecon.mesh import BROKEN, FeSpace, build_mesh


@pytest.fixture
def vec_field():
    s = FeSpace(build_mesh(nx=4), 5)
    return interpolate(lambda x, y: np.stack([np.sin(x) + y, x * y]), s)


def test_zero_noise_is_identity(vec_field):
    out = add_noise(vec_field, 0.0)
    np.testing.assert_array_equal(out.values, vec_field.values)
    assert out.values is not vec_field.values


def test_noise_at_origin():
    assert noise_bound(20) == pytest.approx(21.0)
    assert noise_profile(0.0, 0.0, 1e-3) == pytest.approx(21e-3)


def test_noise_same_on_both_components(vec_field):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        d = add_noise(vec_field, 1e-3).values - vec_field.values
    np.testing.assert_allclose(d[0], d[1])


@pytest.mark.parametrize("delta", [1e-2, 1e-3, 1e-5])
def test_noise_bound_and_nondegeneracy(vec_field, delta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        d = np.abs(add_noise(vec_field, delta).values - vec_field.values)
    assert d.max() <= 21 * delta * (1 + 1e-12)
    assert d.max() >= 0.5 * 21 * delta


def test_noise_deterministic(vec_field):
    a = add_noise(vec_field, 1e-2)
    b = add_noise(vec_field, 1e-2)
    assert a.values.tobytes() == b.values.tobytes()


def test_aliasing_warning():
    s = FeSpace(build_mesh(nx=4), 5)  # nodal spacing 0.05
    u = interpolate(lambda x, y: np.stack([x, y]), s)
    with pytest.warns(AliasingWarning):
        add_noise(u, 1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        add_noise(u, 0.02)


def test_noise_input_validation(vec_field):
    with pytest.raises(ValueError):
        add_noise(vec_field, -1.0)
    with pytest.raises(ValueError):
        add_noise(vec_field, 1e-3, M=0)


def test_measurement_set_noisy(vec_field):
    ms = MeasurementSet(vec_field, vec_field, omega1=1.0)
    noisy = ms.noisy(1e-4)
    assert noisy.delta == 1e-4 and noisy.omega1 == 1.0
    assert noisy.metadata["noise_modes"] == 20


def test_round_trip(tmp_path, vec_field):
    p = write_field(vec_field, tmp_path / "u.fld")
    back = read_field(p)
    assert back.values.tobytes() == vec_field.values.tobytes()
    assert back.space == vec_field.space


def test_round_trip_broken_and_custom_domain(tmp_path, rng):
    s = FeSpace(build_mesh((0.0, 2.5, -1.0, 1.0), nx=3, ny=2), 2, BROKEN)
    f = Field(s, rng.standard_normal((3, s.dof_count)))
    back = read_field(write_field(f, tmp_path / "b.fld"), s)
    np.testing.assert_array_equal(back.values, f.values)
    assert back.space.mesh.domain == (0.0, 2.5, -1.0, 1.0)


def test_reference_sized_header(tmp_path):
    s = FeSpace(build_mesh(nx=120), 5)
    f = Field(s, np.zeros((1, s.dof_count)))
    space, ncomp, offset = read_header(write_field(f, tmp_path / "big.fld"))
    assert space.dof_count == 601 * 601
    assert ncomp == 1 and offset % 64 == 0


def test_truncated_payload(tmp_path, vec_field):
    p = write_field(vec_field, tmp_path / "u.fld")
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FieldFileError, match="payload length"):
        read_field(p)


def test_space_mismatch(tmp_path, vec_field):
    p = write_field(vec_field, tmp_path / "u.fld")
    with pytest.raises(FieldFileError):
        read_field(p, FeSpace(build_mesh(nx=5), 5))


def test_bad_header(tmp_path):
    p = tmp_path / "junk.fld"
    p.write_bytes(b"NOTAFIELD".ljust(63) + b"\n")
    with pytest.raises(FieldFileError):
        read_field(p)


def test_refuses_nonfinite(tmp_path):
    s = FeSpace(build_mesh(nx=1), 1)
    with pytest.raises(ValueError):
        write_field(Field(s, np.array([0, 1, np.nan, 2.0])), tmp_path / "x.fld")
