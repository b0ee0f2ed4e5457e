import numpy as np

from gradcheck import assert_param_grads_match
from microppi import tensor as T
from microppi.hgnn import HgnnLayer, HgnnStack, decode, hgnn_forward
from microppi.protein_graph import KNEAREST, RADIUS, RELATIONS, SEQUENTIAL, HeteroProteinGraph
from microppi.tensor import Tensor


def make_graph(n, edges_by_rel):
    edges = {}
    for rel in RELATIONS:
        pairs = edges_by_rel.get(rel, [])
        edges[rel] = np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)
    return HeteroProteinGraph(protein_id="g", n_nodes=n, edges=edges)


def random_graph(rng, n, per_rel=10):
    edges = {}
    for rel in RELATIONS:
        pairs = set()
        while len(pairs) < per_rel:
            a, b = rng.integers(0, n, size=2)
            if a != b:
                pairs.add((int(a), int(b)))
        edges[rel] = sorted(pairs)
    return make_graph(n, edges)


def dense_oracle(stack, g, x):
    """Adjacency-matrix reimplementation of the stack in train mode."""
    h = x.copy()
    for layer in stack.layers:
        f_out = layer.w_h.data.shape[0]
        total = np.zeros((g.n_nodes, f_out))
        for rel in RELATIONS:
            adj = np.zeros((g.n_nodes, g.n_nodes))
            for s, d in g.edges[rel]:
                adj[d, s] += 1.0
            total += (adj @ h) @ layer.w_rel[rel].data
        pre = total @ layer.w_h.data
        if layer.with_activation:
            act = np.maximum(pre, 0.0)
            mu, var = act.mean(axis=0), act.var(axis=0)
            h = layer.bn.gamma.data * (act - mu) / np.sqrt(var + 1e-5) + layer.bn.beta.data
        else:
            h = pre
    return h


def test_zero_edge_graph_gives_zero_output():
    rng = np.random.default_rng(0)
    g = make_graph(4, {})
    stack = HgnnStack.encoder(3, 5, 2, rng)
    out = hgnn_forward(stack, g, Tensor(rng.normal(size=(4, 3))), training=True)
    assert np.allclose(out.data, 0.0)


def test_single_relation_hand_trace():
    rng = np.random.default_rng(1)
    g = make_graph(2, {SEQUENTIAL: [(0, 1), (1, 0)]})
    layer = HgnnLayer(2, 2, rng, "l0", with_activation=False)
    layer.w_rel[SEQUENTIAL].data = np.eye(2)
    layer.w_rel[RADIUS].data = np.zeros((2, 2))
    layer.w_rel[KNEAREST].data = np.zeros((2, 2))
    x = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    pre = layer(g, x, training=True)
    expected_node0 = np.maximum(np.array([0.0, 1.0]) @ layer.w_h.data, 0.0)
    assert np.allclose(np.maximum(pre.data[0], 0.0), expected_node0)


def test_forward_matches_dense_oracle():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 8, per_rel=12)
    stack = HgnnStack.encoder(4, 6, 3, rng)
    x = rng.normal(size=(8, 4))
    out = hgnn_forward(stack, g, Tensor(x), training=True)
    assert np.allclose(out.data, dense_oracle(stack, g, x), atol=1e-10)


def test_decoder_matches_dense_oracle_with_linear_tail():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 6, per_rel=8)
    stack = HgnnStack.decoder(5, 3, 2, rng)
    z = rng.normal(size=(6, 5))
    out = decode(stack, g, Tensor(z), training=True)
    assert np.allclose(out.data, dense_oracle(stack, g, z), atol=1e-10)
    assert stack.layers[-1].bn is None


def test_zero_input_on_edgeless_graph_decodes_to_zero():
    rng = np.random.default_rng(4)
    g = make_graph(3, {})
    stack = HgnnStack.decoder(4, 2, 2, rng)
    out = decode(stack, g, Tensor(np.zeros((3, 4))), training=True)
    assert np.allclose(out.data, 0.0)


def test_encode_decode_shape_contract():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 7, per_rel=9)
    enc = HgnnStack.encoder(20, 8, 2, rng)
    dec = HgnnStack.decoder(8, 20, 2, rng)
    z = enc(g, Tensor(np.eye(20)[rng.integers(0, 20, size=7)]), training=True)
    out = dec(g, z, training=True)
    assert out.data.shape == (7, 20)


def test_decoder_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    g = random_graph(rng, 5, per_rel=6)
    stack = HgnnStack.decoder(3, 2, 2, rng)
    z = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))

    def loss():
        recon = decode(stack, g, Tensor(z), training=True)
        diff = T.sub(recon, Tensor(target))
        return T.mean(T.mul(diff, diff))

    assert_param_grads_match(stack.parameters(), loss)


def test_node_permutation_equivariance():
    rng = np.random.default_rng(7)
    n = 9
    g = random_graph(rng, n, per_rel=14)
    stack = HgnnStack.encoder(4, 5, 2, rng)
    x = rng.normal(size=(n, 4))
    out = hgnn_forward(stack, g, Tensor(x), training=True)

    perm = rng.permutation(n)
    relabeled = make_graph(n, {
        rel: [(int(perm[a]), int(perm[b])) for a, b in g.edges[rel]] for rel in RELATIONS
    })
    x_perm = np.empty_like(x)
    x_perm[perm] = x
    out_perm = hgnn_forward(stack, relabeled, Tensor(x_perm), training=True)
    assert np.allclose(out_perm.data[perm], out.data, atol=1e-10)


def test_receptive_field_bounded_by_depth_in_eval_mode():
    rng = np.random.default_rng(8)
    n, n_layers = 8, 2
    # directed chain i -> i+1; node m sees only m-1 .. m-L
    g = make_graph(n, {KNEAREST: [(i, i + 1) for i in range(n - 1)]})
    stack = HgnnStack.encoder(3, 4, n_layers, rng)
    x = rng.normal(size=(n, 3))
    for _ in range(3):
        hgnn_forward(stack, g, Tensor(x), training=True)

    baseline = hgnn_forward(stack, g, Tensor(x), training=False).data
    target = 6
    # without self-loops the chain's receptive field is the node exactly L hops back
    far = x.copy()
    far[target - n_layers - 1] += 10.0
    perturbed = hgnn_forward(stack, g, Tensor(far), training=False).data
    assert np.array_equal(perturbed[target], baseline[target])
    # ...but it does reach the node L hops downstream of the perturbation
    assert not np.allclose(perturbed[target - 1], baseline[target - 1])

    near = x.copy()
    near[target - n_layers] += 10.0
    assert not np.allclose(
        hgnn_forward(stack, g, Tensor(near), training=False).data[target], baseline[target]
    )


def test_doubled_edges_double_relation_message():
    rng = np.random.default_rng(9)
    edges = [(0, 1), (1, 2), (2, 0), (1, 0)]
    g_single = make_graph(3, {RADIUS: edges})
    g_double = make_graph(3, {RADIUS: edges + edges})
    layer = HgnnLayer(3, 3, rng, "lin", with_activation=False)
    x = Tensor(rng.normal(size=(3, 3)))
    out1 = layer(g_single, x, training=True)
    out2 = layer(g_double, x, training=True)
    assert np.allclose(out2.data, 2.0 * out1.data)
