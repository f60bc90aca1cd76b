import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faultgait.config import (Config, apply_overrides, desk_profile, dump_config,
                              load_config, load_profile, make_rng, paper_profile,
                              parse_config, save_config, seed_seq)


def test_dump_parse_dump_byte_identical():
    cfg = desk_profile()
    text = dump_config(cfg)
    assert dump_config(parse_config(text)) == text


def test_round_trip_through_file(tmp_path):
    cfg = paper_profile()
    path = tmp_path / "config.cfg"
    save_config(cfg, path)
    cfg2 = load_config(path)
    assert dump_config(cfg2) == dump_config(cfg)
    assert cfg2.hash() == cfg.hash()


@given(
    st.floats(0.9, 0.999), st.integers(1, 64), st.floats(1e-5, 1e-2),
    st.integers(1, 500), st.booleans(),
)
@settings(max_examples=30, deadline=None)
def test_round_trip_with_random_overrides(gamma, envs, lr, iters, norm):
    cfg = desk_profile()
    cfg.ppo.gamma = gamma
    cfg.ppo.num_envs = envs
    cfg.ppo.learning_rate = lr
    cfg.teacher.iterations = iters
    cfg.ppo.normalize_advantages = norm
    text = dump_config(cfg)
    again = parse_config(text)
    assert dump_config(again) == text
    assert again.ppo.gamma == gamma
    assert again.ppo.num_envs == envs


def test_paper_profile_matches_published_settings():
    cfg = paper_profile()
    assert cfg.nets.seq_len == 10
    assert cfg.nets.encoder_dims == (512, 512, 512)
    assert cfg.nets.obs_dim == 45
    assert cfg.nets.label_dim == 4
    assert cfg.nets.decoder_dims == (512, 256, 128)
    assert cfg.nets.decoder_in_dim == 49
    assert cfg.nets.critic_dims == (512, 256, 128)
    assert cfg.ppo.num_envs == 3456
    assert cfg.student.style_scale_weight == 100.0
    assert cfg.student.style_direction_weight == 5.0
    assert cfg.teacher.iterations >= 5000
    r = cfg.rand
    assert (r.friction_low, r.friction_high) == (0.5, 1.25)
    assert (r.added_mass_low, r.added_mass_high) == (-1.0, 1.0)
    assert r.push_velocity == 1.0
    assert (r.motor_scale_low, r.motor_scale_high) == (0.8, 1.2)
    assert r.fault_switch_steps == 300


def test_desk_profile_shrinks_but_keeps_contract_dims():
    cfg = desk_profile()
    assert cfg.nets.obs_dim == 45
    assert cfg.nets.decoder_in_dim == 49
    assert cfg.nets.seq_len == 10
    assert cfg.ppo.num_envs == 256
    assert cfg.student.style_scale_weight == 100.0


def test_unknown_profile_and_bad_parse():
    with pytest.raises(ValueError):
        load_profile("laptop")
    with pytest.raises(ValueError):
        parse_config("[nosuch]\nx = 1\n")
    with pytest.raises(ValueError):
        parse_config("[ppo]\nnot_a_key = 1\n")
    with pytest.raises(ValueError):
        parse_config("[ppo]\ngamma\n")


def test_validation_rejects_bad_values():
    cfg = desk_profile()
    cfg.ppo.gamma = 1.5
    with pytest.raises(ValueError):
        cfg.validate()
    cfg = desk_profile()
    cfg.sim.physics_dt = -1.0
    with pytest.raises(ValueError):
        cfg.validate()


def test_hash_changes_with_values():
    a = desk_profile()
    b = desk_profile()
    b.ppo.gamma = 0.98
    assert a.hash() != b.hash()
    assert a.hash() == desk_profile().hash()


def test_apply_overrides():
    cfg = desk_profile()
    apply_overrides(cfg, {"ppo.gamma": "0.97", "teacher.iterations": "7"})
    assert cfg.ppo.gamma == 0.97
    assert cfg.teacher.iterations == 7
    with pytest.raises(ValueError):
        apply_overrides(cfg, {"ppo.nope": "1"})
    with pytest.raises(ValueError):
        apply_overrides(cfg, {"gamma": "0.9"})


def test_seed_tree_deterministic_and_distinct():
    a1 = make_rng(7, 1, 3, 0).integers(0, 2**63, 4)
    a2 = make_rng(7, 1, 3, 0).integers(0, 2**63, 4)
    b = make_rng(7, 1, 4, 0).integers(0, 2**63, 4)
    c = make_rng(8, 1, 3, 0).integers(0, 2**63, 4)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_seed_seq_spawns_are_stable():
    children1 = [s.generate_state(1)[0] for s in seed_seq(3, 2).spawn(4)]
    children2 = [s.generate_state(1)[0] for s in seed_seq(3, 2).spawn(4)]
    assert children1 == children2
