"""Release acceptance checks, one test per criterion.

Each test prints a single pass or fail line with its measured numbers so a
full run reads as a checklist.  The expensive pieces (dataset generation and
the default training run) live in module-scoped fixtures shared by the later
criteria.
"""

import time

import numpy as np
import pytest

from reference_impls import (
    brute_force_action,
    brute_force_correspondence,
    dense_gcn_layer,
    finite_difference_gradient,
    max_relative_error,
    two_nearest_adjacency,
)
from ropebench.autodiff import Tensor, conv2d, crop2d, gcn_layer, spatial_softmax_ce
from ropebench.cli import main as cli_main
from ropebench.dataset import (
    Transition,
    generate_demonstrations,
    generate_tasks,
    load_split,
    read_episode,
    transitions_from_episodes,
    write_episode,
)
from ropebench.model import (
    ModelHyper,
    encode_graph,
    fcn_forward,
    forward_pick,
    forward_place,
    init_params,
    load_params,
    observe,
    place_kernel,
    save_params,
    stack_images,
)
from ropebench.oracle import best_correspondence, oracle_action
from ropebench.rollout import (
    ModelPolicy,
    OraclePolicy,
    RandomPolicy,
    rollout,
    success_rate,
)
from ropebench.sim import PickPlaceAction, SimConfig, Topology, init_state, render, scramble
from ropebench.training import (
    TrainConfig,
    eval_errors,
    imitation_loss,
    prepare_sample,
    train_imitation,
)

GRAD_TOL = 1e-4

SMALL = ModelHyper(
    image_h=16,
    image_w=16,
    num_keypoints=4,
    crop_size=4,
    feature_depth=1,
    gcn_hidden=8,
    fcn_hidden=4,
)


def _report(index, label, ok, detail):
    print(f"acceptance {index} {label}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{label}: {detail}"


# ---- criterion 1: gradients ----


def _tiny_transitions(count):
    """Real rendered rope pairs at 16x16 with arbitrary demonstrated actions."""
    sim = SimConfig(image_h=16, image_w=16, render_thickness=1)
    base = init_state(Topology.CHAIN, 8, 0.05)
    rng = np.random.default_rng(17)
    out = []
    for i in range(count):
        current = scramble(base, 2, 100 + i, sim)
        goal = scramble(base, 2, 200 + i, sim)
        action = PickPlaceAction(
            pick=(int(rng.integers(16)), int(rng.integers(16))),
            place=(int(rng.integers(16)), int(rng.integers(16))),
        )
        out.append(
            Transition(
                image_current=render(current, 16, 16, 1),
                image_goal=render(goal, 16, 16, 1),
                action=action,
                positions_current=current.units,
                positions_goal=goal.units,
                topology=Topology.CHAIN,
                link_length=current.link_length,
            )
        )
    return out


def _model_loss(params, samples):
    """The training objective rebuilt from public pieces: pick cross-entropy
    plus place cross-entropy with the kernel cropped at the demonstrated
    pick."""
    hyper = params.hyper
    h, w = hyper.image_h, hyper.image_w
    x = Tensor(np.stack([np.stack([s.image_current, s.image_goal]) for s in samples]))
    pick_maps = fcn_forward(params.pick_fcn, x)
    query_maps = fcn_forward(params.query_fcn, x)
    key_maps = fcn_forward(params.key_fcn, x)
    total = None
    for i, s in enumerate(samples):
        term = spatial_softmax_ce(pick_maps[i].reshape((h, w)), s.pick)
        code_t = encode_graph(s.graph_current, params)
        code_g = encode_graph(s.graph_goal, params)
        kernel = place_kernel(query_maps[i], s.pick, code_t, code_g, hyper)
        response = conv2d(
            key_maps[i],
            kernel.reshape((1, hyper.feature_depth, hyper.crop_size, hyper.crop_size)),
        ).reshape((h, w))
        term = term + spatial_softmax_ce(response, s.place)
        total = term if total is None else total + term
    return total * (1.0 / len(samples))


def _op_gradient_errors():
    """Full finite-difference sweeps over every differentiable operation at
    small shapes.  Returns (name, error) pairs."""
    rng = np.random.default_rng(3)
    errors = []

    def check(name, build, leaves):
        for t in leaves:
            t.zero_grad()
        build().backward()
        for t in leaves:
            fd = finite_difference_gradient(lambda: float(build().data), t.data)
            errors.append((name, max_relative_error(t.grad, fd)))

    x = Tensor(rng.normal(size=(2, 5, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    probe = Tensor(rng.normal(size=(3, 5, 5)))
    check("conv2d same", lambda: (conv2d(x, w, b, "same") * probe).sum(), (x, w, b))

    xe = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    we = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
    pe = Tensor(rng.normal(size=(1, 3, 3)))
    check("conv2d valid even", lambda: (conv2d(xe, we, None, "valid") * pe).sum(), (xe, we))

    dx = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    dw = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    dp = Tensor(rng.normal(size=(4, 2)))
    check("dense", lambda: ((dx @ dw) * dp).sum(), (dx, dw))

    xr = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    pr = Tensor(rng.normal(size=(3, 4)))
    check("relu", lambda: (xr.relu() * pr).sum(), (xr,))

    xc = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    pc = Tensor(rng.normal(size=(2, 4, 4)))
    check("crop2d", lambda: (crop2d(xc, (1, 5), 4) * pc).sum(), (xc,))

    adj = two_nearest_adjacency(rng.random((5, 2)))
    hg = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    wg = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    pg = Tensor(rng.normal(size=(5, 4)))
    for activation in ("relu", "identity"):
        check(
            f"gcn {activation}",
            lambda: (gcn_layer(hg, adj, wg, activation) * pg).sum(),
            (hg, wg),
        )

    z = Tensor(rng.normal(size=(6, 7)), requires_grad=True)
    check("spatial softmax ce", lambda: spatial_softmax_ce(z, (2, 5)), (z,))
    return errors


def test_1_gradients_match_finite_differences():
    start = time.perf_counter()
    errors = _op_gradient_errors()

    transitions = _tiny_transitions(2)
    params = init_params(SMALL, seed=0)
    prepared = [prepare_sample(t, SMALL) for t in transitions]
    tensors = params.parameters()
    rng = np.random.default_rng(5)
    # Fresh parameters put the black image background exactly on the relu
    # kink (zero biases, zero inputs), where central differences straddle the
    # corner and disagree with the subgradient.  A small jitter moves every
    # plateau off the kink without changing what is being checked.
    for t in tensors:
        t.data += rng.normal(0.0, 0.05, t.data.shape)
    for t in tensors:
        t.zero_grad()
    _model_loss(params, prepared).backward()

    for t in tensors:
        flat = t.data.ravel()
        idx = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        fd = np.zeros(len(idx))
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + 1e-5
            fp = imitation_loss(params, transitions)
            flat[i] = old - 1e-5
            fm = imitation_loss(params, transitions)
            flat[i] = old
            fd[j] = (fp - fm) / 2e-5
        an = t.grad.ravel()[idx] if t.grad is not None else np.zeros(len(idx))
        # The loss is invariant to the pick head's output bias (a uniform
        # logit shift), so that gradient is exactly zero and the denominator
        # needs an absolute floor.
        err = float(np.abs(an - fd).max()) / max(float(np.abs(fd).max()), 1e-6)
        errors.append((f"end-to-end {t.data.shape}", err))

    elapsed = time.perf_counter() - start
    name, worst = max(errors, key=lambda e: e[1])
    ok = worst < GRAD_TOL and elapsed < 60
    _report(1, "gradient checks", ok, f"worst {worst:.2e} at {name}, {elapsed:.1f}s")


# ---- criterion 2: graph convolution against a dense reference ----


def test_2_graph_convolution_matches_dense_reference():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(50):
        k = int(rng.integers(3, 17))
        adj = two_nearest_adjacency(rng.random((k, 2)))
        h = rng.normal(size=(k, int(rng.integers(2, 6))))
        w = rng.normal(size=(h.shape[1], int(rng.integers(2, 6))))
        for activation in ("relu", "identity"):
            got = gcn_layer(Tensor(h), adj, Tensor(w), activation).data
            want = dense_gcn_layer(h, adj, w, activation)
            worst = max(worst, float(np.abs(got - want).max()))
    ok = worst < 1e-10
    _report(2, "graph convolution vs dense reference", ok, f"worst difference {worst:.2e}")


# ---- criterion 3: correspondence search against brute force ----


def test_3_correspondence_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(33)
    checked = 0
    for topology in (Topology.CHAIN, Topology.RING):
        for _ in range(200):
            n = int(rng.integers(3, 9))
            p_current = rng.random((n, 2))
            p_goal = rng.random((n, 2))
            corr = best_correspondence(p_current, p_goal, topology)
            bf_map, bf_mse = brute_force_correspondence(p_current, p_goal, topology.value)
            assert corr.remap.tolist() == bf_map
            assert corr.mse == pytest.approx(bf_mse, rel=1e-12)
            pick, place = oracle_action(p_current, p_goal, topology)
            bf_pick, bf_place = brute_force_action(p_current, p_goal, topology.value)
            assert np.array_equal(pick, bf_pick)
            assert np.array_equal(place, bf_place)
            checked += 1
    elapsed = time.perf_counter() - start
    ok = checked == 400 and elapsed < 10
    _report(3, "correspondence vs brute force", ok, f"{checked} instances agree, {elapsed:.1f}s")


# ---- criterion 4: oracle competence on generated tasks ----


def test_4_oracle_solves_generated_tasks():
    start = time.perf_counter()
    rates = {}
    lengths = []
    for mix, label in ((1.0, "chain"), (0.0, "ring")):
        tasks = generate_tasks(100, topology_mix=mix, seed=9)
        results = [rollout(OraclePolicy(), task) for task in tasks]
        rates[label] = sum(r.success for r in results) / len(results)
        lengths += [r.actions_used for r in results if r.success]
    in_range = sum(1 <= n <= 20 for n in lengths) / len(lengths)
    elapsed = time.perf_counter() - start
    ok = rates["chain"] >= 0.95 and rates["ring"] >= 0.95 and in_range >= 0.8 and elapsed < 120
    _report(
        4,
        "oracle competence",
        ok,
        f"success chain {rates['chain']:.2f} ring {rates['ring']:.2f}, "
        f"{in_range:.0%} of lengths in [1,20], {elapsed:.0f}s",
    )


# ---- criterion 5: masks gate the score maps; kernels match on identical graphs ----


def test_5_masks_gate_scores_and_identical_graphs_share_kernels():
    sigmas = (3.0, 1.0, 0.6)
    models = {s: init_params(ModelHyper(mask_sigma=s), seed=11) for s in sigmas}
    base_chain = init_state(Topology.CHAIN, 32, 0.02)
    base_ring = init_state(Topology.RING, 32, 0.02)
    zero_pixels = 0
    kernel_matches = 0
    for i in range(100):
        base = base_chain if i % 2 == 0 else base_ring
        current = scramble(base, 2, 300 + i)
        goal = scramble(base, 2, 700 + i)
        image_t = render(current, 64, 64, 3)
        image_g = render(goal, 64, 64, 3)
        hyper_params = models[sigmas[i % len(sigmas)]]
        hyper = hyper_params.hyper
        _, _, graph_t, graph_g, mask_t, mask_g = observe(image_t, image_g, hyper)
        code_t = encode_graph(graph_t, hyper_params)
        code_g = encode_graph(graph_g, hyper_params)

        q_pick, pick = forward_pick(image_t, image_g, mask_t, hyper_params)
        outside_t = mask_t == 0.0
        assert np.all(q_pick.data[outside_t] == 0.0)
        assert mask_t[pick] > 0.0

        q_place, place = forward_place(
            image_t, image_g, pick, code_t, code_g, mask_g, hyper_params
        )
        outside_g = mask_g == 0.0
        assert np.all(q_place.data[outside_g] == 0.0)
        assert mask_g[place] > 0.0
        zero_pixels += int(outside_t.sum()) + int(outside_g.sum())

        if i < 20:
            # The same image twice gives bit-identical graphs, so the place
            # kernel must equal the plain query crop exactly.
            _, _, g_a, g_b, _, _ = observe(image_t, image_t, hyper)
            code_a = encode_graph(g_a, hyper_params)
            code_b = encode_graph(g_b, hyper_params)
            query_map = fcn_forward(hyper_params.query_fcn, stack_images(image_t, image_t))
            kernel = place_kernel(query_map, pick, code_a, code_b, hyper)
            plain = crop2d(query_map, pick, hyper.crop_size)
            assert np.array_equal(kernel.data, plain.data)
            kernel_matches += 1

    ok = zero_pixels > 0 and kernel_matches == 20
    _report(
        5,
        "mask and kernel invariants",
        ok,
        f"100 inputs, {zero_pixels} off-support pixels all zero, "
        f"{kernel_matches} identical-graph kernels exact",
    )


# ---- criterion 6: overfit capacity ----


def _overfit_transitions(tmp_path):
    tasks = generate_tasks(8, topology_mix=1.0, seed=42)
    demo_dir = tmp_path / "overfit"
    generate_demonstrations(tasks, demo_dir)
    episodes = [
        *load_split(demo_dir, "train"),
        *load_split(demo_dir, "val"),
        *load_split(demo_dir, "test"),
    ]
    return transitions_from_episodes(episodes)[:10]


def test_6_overfits_ten_transitions(tmp_path):
    transitions = _overfit_transitions(tmp_path)
    assert len(transitions) == 10
    config = TrainConfig(steps=400, val_cadence=25, stop_loss=0.1)

    start = time.perf_counter()
    params, log = train_imitation(transitions, config=config)
    elapsed = time.perf_counter() - start

    probes = [r.train_loss for r in log if r.train_loss is not None]
    batch = [r.batch_loss for r in log]
    full_windows = [
        float(np.mean(batch[k * 100 : (k + 1) * 100])) for k in range(len(batch) // 100)
    ]
    monotone = all(b <= a for a, b in zip(full_windows, full_windows[1:]))

    params_again, log_again = train_imitation(transitions, config=config)
    same_losses = [r.batch_loss for r in log_again] == batch
    same_params = all(
        np.array_equal(p.data, q.data)
        for p, q in zip(params.parameters(), params_again.parameters())
    )

    ok = (
        probes[-1] < 0.1
        and log[-1].step <= 5000
        and elapsed < 300
        and monotone
        and same_losses
        and same_params
    )
    _report(
        6,
        "overfit capacity",
        ok,
        f"loss {probes[-1]:.3f} at step {log[-1].step} in {elapsed:.0f}s, "
        f"window means {'non-increasing' if monotone else 'increased'}, "
        f"rerun {'identical' if same_losses and same_params else 'diverged'}",
    )


# ---- criteria 7 and 8: the default training run and its rollouts ----


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("ropeset")
    tasks = generate_tasks(200, topology_mix=1.0, seed=7)
    generate_demonstrations(tasks, data_dir)
    train_ts = transitions_from_episodes(load_split(data_dir, "train"))
    val_ts = transitions_from_episodes(load_split(data_dir, "val"))
    test_ts = transitions_from_episodes(load_split(data_dir, "test"))
    start = time.perf_counter()
    params, _ = train_imitation(train_ts, val_ts, TrainConfig())
    elapsed = time.perf_counter() - start
    return params, test_ts, elapsed


def test_7_held_out_errors_within_bounds(default_run):
    params, test_ts, train_elapsed = default_run
    e_pick, e_place = eval_errors(params, test_ts)
    ok = e_pick <= 0.10 and e_place <= 0.10 and train_elapsed <= 7200
    _report(
        7,
        "held-out action errors",
        ok,
        f"e_pick {e_pick:.4f} e_place {e_place:.4f} on {len(test_ts)} transitions, "
        f"trained in {train_elapsed:.0f}s",
    )


def test_8_rollouts_beat_random_baseline(default_run):
    params, _, _ = default_run
    tasks = generate_tasks(50, topology_mix=1.0, seed=1234)
    start = time.perf_counter()
    model_rate = success_rate(ModelPolicy(params), tasks)
    random_rate = success_rate(RandomPolicy(seed=0), tasks)
    elapsed = time.perf_counter() - start
    ok = model_rate >= 0.40 and model_rate >= 3.0 * random_rate and elapsed <= 1800
    _report(
        8,
        "rollout success",
        ok,
        f"model {model_rate:.2f} vs random {random_rate:.2f} on 50 fresh tasks, {elapsed:.0f}s",
    )


# ---- criterion 9: reproducibility ----


def test_9_outputs_reproducible(tmp_path, capsys):
    def run(argv):
        code = cli_main(argv)
        captured = capsys.readouterr()
        assert code == 0, captured.err
        return captured.out

    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    run(["gen", "--n-tasks", "6", "--seed", "5", "--out", str(dir_a)])
    run(["gen", "--n-tasks", "6", "--seed", "5", "--out", str(dir_b)])
    names = sorted(p.name for p in dir_a.iterdir())
    gen_same = names == sorted(p.name for p in dir_b.iterdir()) and all(
        (dir_a / n).read_bytes() == (dir_b / n).read_bytes() for n in names
    )

    config = tmp_path / "train.cfg"
    config.write_text("steps = 3\n")
    ck_a, ck_b = tmp_path / "a.gtwt", tmp_path / "b.gtwt"
    run(["train", "--data", str(dir_a), "--config", str(config), "--checkpoint-out", str(ck_a)])
    run(["train", "--data", str(dir_a), "--config", str(config), "--checkpoint-out", str(ck_b)])
    train_same = ck_a.read_bytes() == ck_b.read_bytes()

    eval_a = run(["eval", "--checkpoint", str(ck_a), "--data", str(dir_a)])
    eval_b = run(["eval", "--checkpoint", str(ck_a), "--data", str(dir_a)])
    eval_same = eval_a == eval_b and "e_pick" in eval_a

    episode_name = next(n for n in names if n.endswith(".gtep"))
    write_episode(read_episode(dir_a / episode_name), tmp_path / "roundtrip.gtep")
    episode_same = (
        (tmp_path / "roundtrip.gtep").read_bytes() == (dir_a / episode_name).read_bytes()
    )
    save_params(load_params(ck_a), tmp_path / "roundtrip.gtwt")
    checkpoint_same = (tmp_path / "roundtrip.gtwt").read_bytes() == ck_a.read_bytes()

    ok = gen_same and train_same and eval_same and episode_same and checkpoint_same
    _report(
        9,
        "reproducibility",
        ok,
        f"gen {gen_same}, train {train_same}, eval {eval_same}, "
        f"round trips {episode_same and checkpoint_same}",
    )
