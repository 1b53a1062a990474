#!/usr/bin/env python3
"""
测试零空间分类头
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.autodiff import Tensor
from core.errors import DatasetError, DimensionError
from core.nulling_head import (ErrorMatrix, HeadConfig, PrototypeSet, ReferenceBank,
                               alignment_score, build_projector, class_averages, error_vectors,
                               nulled_logits, predict, zero_forcing_residuals)
from core.numeric import RngStream, explicit_basis_projector, gram_schmidt, matrix_rank

DIMS = (8, 16, 64)
WAYS = (2, 5, 20)


def protos_of(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    return PrototypeSet(protos=Tensor(matrix), slots=np.arange(matrix.shape[0]))


def random_instances(count, seed):
    """Random (refs, protos) pairs with N_c < D."""
    rng = RngStream(seed)
    pairs = [(d, w) for d in DIMS for w in WAYS if w < d]
    for i in range(count):
        dim, way = pairs[i % len(pairs)]
        yield rng.normal(size=(way, dim)), rng.normal(size=(way, dim))


class TestClassAverages(unittest.TestCase):
    """类均值测试类"""

    def test_two_points(self):
        """测试两个点的均值"""
        protos = class_averages(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 0])
        np.testing.assert_array_equal(protos.protos.data, [[0.5, 0.5]])

    def test_single_shot_unchanged(self):
        """测试单样本不变"""
        emb = RngStream(1).normal(size=(3, 4))
        np.testing.assert_array_equal(class_averages(emb, [0, 1, 2]).protos.data, emb)

    def test_summation_oracle(self):
        """测试与逐项求和一致"""
        rng = RngStream(2)
        emb = rng.normal(size=(15, 6))
        slots = np.repeat(np.arange(3), 5)
        protos = class_averages(emb, slots)
        for k in range(3):
            expected = sum(emb[i] for i in range(15) if slots[i] == k) / 5
            np.testing.assert_allclose(protos.protos.data[k], expected, atol=1e-12)

    def test_empty_slot(self):
        """测试空类报错"""
        with self.assertRaises(DatasetError):
            class_averages(np.ones((2, 3)), [0, 2], way=3)

    def test_slot_outside_way(self):
        """测试槽位超出way范围时报维度错误"""
        with self.assertRaises(DimensionError):
            class_averages(np.ones((2, 3)), [0, 3], way=3)
        with self.assertRaises(DimensionError):
            class_averages(np.ones((2, 3)), [-1, 0], way=2)


class TestErrorVectors(unittest.TestCase):
    """误差向量测试类"""

    def test_hand_example(self):
        """测试D=4, N_c=2的手算例子"""
        eye = np.eye(4)
        errs = error_vectors(eye[:2], protos_of(eye[2:]), normalize=False)
        np.testing.assert_array_equal(errs.matrix[:, 0], [1, -1, -1, 0])
        np.testing.assert_array_equal(errs.matrix[:, 1], [-1, 1, 0, -1])

    def test_single_class(self):
        """测试单类时误差向量为-g"""
        g = np.array([[0.3, -0.2, 0.9]])
        errs = error_vectors(np.array([[1.0, 2.0, 3.0]]), protos_of(g), normalize=False)
        np.testing.assert_allclose(errs.matrix[:, 0], -g[0])

    def test_normalized_two_step_oracle(self):
        """测试单位化后与显式公式一致"""
        rng = RngStream(3)
        refs, protos = rng.normal(size=(5, 9)), rng.normal(size=(5, 9))
        errs = error_vectors(refs, protos_of(protos), normalize=True)
        r = refs / np.linalg.norm(refs, axis=1, keepdims=True)
        g = protos / np.linalg.norm(protos, axis=1, keepdims=True)
        for k in range(5):
            others = sum(r[l] for l in range(5) if l != k)
            np.testing.assert_allclose(errs.matrix[:, k], 4 * r[k] - others - g[k], atol=1e-12)

    def test_shape_mismatch(self):
        """测试形状不匹配"""
        with self.assertRaises(DimensionError):
            error_vectors(np.ones((3, 4)), protos_of(np.ones((2, 4))))


class TestBuildProjector(unittest.TestCase):
    """投影矩阵测试类"""

    def test_zero_errors_identity(self):
        """测试V=0时P=I"""
        proj = build_projector(ErrorMatrix(Tensor(np.zeros((5, 2)))))
        np.testing.assert_array_equal(proj.matrix, np.eye(5))
        self.assertEqual(proj.rank, 0)

    def test_hand_example(self):
        """测试手算例子的投影"""
        eye = np.eye(4)
        errs = error_vectors(eye[:2], protos_of(eye[2:]), normalize=False)
        proj = build_projector(errs)
        self.assertLess(zero_forcing_residuals(errs, proj).max(), 1e-12)
        self.assertAlmostEqual(proj.trace, 2.0, places=10)
        span = gram_schmidt(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0], [-1.0, 1.0]]))
        np.testing.assert_allclose(proj.matrix, span @ span.T, atol=1e-10)

    def test_duplicated_columns(self):
        """测试重复列不改变投影"""
        col = RngStream(4).normal(size=(6, 1))
        single = build_projector(ErrorMatrix(Tensor(col)))
        double = build_projector(ErrorMatrix(Tensor(np.hstack([col, col]))))
        np.testing.assert_allclose(single.matrix, double.matrix, atol=1e-10)
        self.assertAlmostEqual(double.trace, 5.0, places=6)

    def test_zero_forcing_invariant(self):
        """测试500个随机episode的零化性质"""
        for refs, protos in random_instances(500, seed=5):
            errs = error_vectors(refs, protos_of(protos))
            proj = build_projector(errs)
            self.assertLessEqual(zero_forcing_residuals(errs, proj).max(), 1e-8)

    def test_projector_algebra(self):
        """测试对称、幂等与迹"""
        for refs, protos in random_instances(500, seed=6):
            errs = error_vectors(refs, protos_of(protos))
            proj = build_projector(errs)
            p = proj.matrix
            self.assertLess(np.abs(p - p.T).max(), 1e-9)
            self.assertLess(np.abs(p @ p - p).max(), 1e-9)
            self.assertAlmostEqual(proj.trace, p.shape[0] - matrix_rank(errs.matrix), delta=1e-6)

    def test_explicit_basis_oracle(self):
        """测试伪逆投影与Gram-Schmidt投影一致（含秩亏）"""
        rng = RngStream(7)
        for i, (refs, protos) in enumerate(random_instances(200, seed=8)):
            v = error_vectors(refs, protos_of(protos)).matrix
            if i % 4 == 0 and v.shape[1] > 1:
                v = np.hstack([v, v[:, :1]])
            elif i % 4 == 1 and v.shape[1] > 2:
                v[:, 1] = v[:, 0] * rng.uniform(0.5, 2.0)
            proj = build_projector(ErrorMatrix(Tensor(v)))
            span = gram_schmidt(v)
            oracle = np.eye(v.shape[0]) - span @ span.T
            self.assertLess(np.linalg.norm(proj.matrix - oracle), 1e-8)
            self.assertLess(np.linalg.norm(proj.matrix - explicit_basis_projector(v)), 1e-8)

    def test_differentiable_matches_constant(self):
        """测试可微投影与常量投影数值一致"""
        rng = RngStream(9)
        refs = Tensor(rng.normal(size=(4, 10)), requires_grad=True)
        errs = error_vectors(refs, protos_of(rng.normal(size=(4, 10))))
        constant = build_projector(errs)
        differentiable = build_projector(errs, differentiable=True)
        self.assertFalse(constant.projector.requires_grad)
        self.assertTrue(differentiable.projector.requires_grad)
        np.testing.assert_allclose(constant.matrix, differentiable.matrix, atol=1e-9)

    def test_with_basis(self):
        """测试返回的零空间基"""
        refs, protos = next(random_instances(1, seed=10))
        proj = build_projector(error_vectors(refs, protos_of(protos)), with_basis=True)
        np.testing.assert_allclose(proj.basis @ proj.basis.T, proj.matrix, atol=1e-9)


class TestNulledLogits(unittest.TestCase):
    """投影距离分数测试类"""

    def identity_projector(self, dim):
        return build_projector(ErrorMatrix(Tensor(np.zeros((dim, 1)))))

    def test_query_on_reference(self):
        """测试P=I且查询等于参考向量"""
        refs = RngStream(11).normal(size=(3, 5))
        refs_hat = refs / np.linalg.norm(refs, axis=1, keepdims=True)
        scores = nulled_logits(refs_hat[0], refs, self.identity_projector(5)).data
        self.assertAlmostEqual(scores[0], 0.0, places=12)
        self.assertTrue(np.all(scores[1:] < 0))
        self.assertEqual(predict(scores), 0)

    def test_query_outside_range(self):
        """测试查询投影为零时分数为-φPφ"""
        v = np.zeros((4, 1))
        v[0, 0] = 1.0
        proj = build_projector(ErrorMatrix(Tensor(v)))
        refs = RngStream(12).normal(size=(2, 4))
        refs_hat = refs / np.linalg.norm(refs, axis=1, keepdims=True)
        query = np.array([3.0, 0.0, 0.0, 0.0])
        expected = -np.einsum('kd,de,ke->k', refs_hat, proj.matrix, refs_hat)
        np.testing.assert_allclose(nulled_logits(query, refs, proj).data, expected, atol=1e-12)

    def test_explicit_basis_argmax(self):
        """测试与显式基约化空间距离的argmax一致"""
        for seed in range(20):
            rng = RngStream(100 + seed)
            refs, protos = rng.normal(size=(5, 16)), rng.normal(size=(5, 16))
            queries = rng.normal(size=(7, 16))
            proj = build_projector(error_vectors(refs, protos_of(protos)), with_basis=True)
            refs_hat = refs / np.linalg.norm(refs, axis=1, keepdims=True)
            reduced_refs = refs_hat @ proj.basis
            reduced_queries = queries @ proj.basis
            dists = np.linalg.norm(reduced_queries[:, None, :] - reduced_refs[None], axis=2)
            logits = nulled_logits(queries, refs, proj).data
            np.testing.assert_array_equal(predict(logits), np.argmin(dists, axis=1))
            np.testing.assert_allclose(-logits, dists ** 2, atol=1e-9)

    def test_inner_product_mode(self):
        """测试内积模式"""
        rng = RngStream(13)
        refs, protos, query = rng.normal(size=(3, 8)), rng.normal(size=(3, 8)), rng.normal(size=8)
        proj = build_projector(error_vectors(refs, protos_of(protos)))
        refs_hat = refs / np.linalg.norm(refs, axis=1, keepdims=True)
        scores = nulled_logits(query, refs, proj, mode='projected-inner-product').data
        np.testing.assert_allclose(scores, refs_hat @ proj.matrix @ query, atol=1e-12)

    def test_dimension_mismatch(self):
        """测试维度不匹配"""
        with self.assertRaises(DimensionError):
            nulled_logits(np.ones(3), np.ones((2, 4)), self.identity_projector(4))

    def test_tie_goes_to_lowest_slot(self):
        """测试平局时取最小序号"""
        self.assertEqual(int(predict(np.array([1.0, 3.0, 3.0]))), 1)

    def test_scale_invariance(self):
        """测试类内统一缩放不改变判决"""
        rng = RngStream(14)
        refs, protos, queries = rng.normal(size=(4, 12)), rng.normal(size=(4, 12)), rng.normal(size=(6, 12))
        base = build_projector(error_vectors(refs, protos_of(protos)))
        scaled_refs = refs * np.array([[2.0], [0.5], [1.0], [7.0]])
        scaled_protos = protos * np.array([[3.0], [1.0], [0.2], [1.0]])
        scaled = build_projector(error_vectors(scaled_refs, protos_of(scaled_protos)))
        np.testing.assert_allclose(base.matrix, scaled.matrix, atol=1e-10)
        np.testing.assert_array_equal(predict(nulled_logits(queries, refs, base)),
                                      predict(nulled_logits(queries, scaled_refs, scaled)))


class TestAlignment(unittest.TestCase):
    """对齐分数测试类"""

    def test_post_nulling_identity(self):
        """测试Δ_k = ||P g_k||^2"""
        for refs, protos in random_instances(200, seed=15):
            proto_set = protos_of(protos)
            proj = build_projector(error_vectors(refs, proto_set))
            g = protos / np.linalg.norm(protos, axis=1, keepdims=True)
            expected = np.linalg.norm(g @ proj.matrix, axis=1) ** 2
            np.testing.assert_allclose(alignment_score(refs, proto_set, proj), expected, atol=1e-8)

    def test_identity_projector(self):
        """测试P=I时Δ_k = w_k·g_k"""
        rng = RngStream(16)
        refs, protos = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        proj = build_projector(ErrorMatrix(Tensor(np.zeros((5, 3)))))
        r = refs / np.linalg.norm(refs, axis=1, keepdims=True)
        g = protos / np.linalg.norm(protos, axis=1, keepdims=True)
        combos = 3 * r - r.sum(axis=0)
        np.testing.assert_allclose(alignment_score(refs, protos_of(protos), proj),
                                   np.sum(combos * g, axis=1), atol=1e-10)


class TestReferenceBankAndConfig(unittest.TestCase):
    """参考向量库与配置测试类"""

    def test_initialize_unit_rows(self):
        """测试初始化为单位行向量"""
        bank = ReferenceBank.initialize(6, 10, RngStream(17))
        np.testing.assert_allclose(np.linalg.norm(bank.refs.data, axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(bank.labels, np.arange(6))
        self.assertTrue(bank.refs.requires_grad)

    def test_duplicate_labels_rejected(self):
        """测试重复标签报错"""
        with self.assertRaises(ValueError):
            ReferenceBank(np.ones((2, 3)), labels=[1, 1])

    def test_rows_exceeding_bank(self):
        """测试episode类数超过参考向量数"""
        bank = ReferenceBank.initialize(3, 4, RngStream(18))
        with self.assertRaises(DatasetError):
            bank.rows(np.arange(4))

    def test_head_config_validation(self):
        """测试未知模式报错与维度警告"""
        with self.assertRaises(ValueError):
            HeadConfig(logit_mode='cosine')
        with self.assertLogs('core.nulling_head', level='WARNING'):
            self.assertFalse(HeadConfig(dim=4).check_way(5))
        self.assertTrue(HeadConfig(dim=32).check_way(5))


if __name__ == '__main__':
    unittest.main()
