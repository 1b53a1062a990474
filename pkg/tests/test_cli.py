#!/usr/bin/env python3
"""
测试命令行接口
"""

import io
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.checkpoint import load_checkpoint
from meta_nulling import create_argument_parser, run_cli

SMALL_MODEL = [
    '--set', 'LOGGING.file=',
    '--set', 'DATASET.synthetic_dim=8',
    '--set', 'MODEL.widths=12,10',
    '--set', 'MODEL.n_ref=6',
    '--set', 'TRAIN.way=5',
    '--set', 'TRAIN.queries=2',
    '-q',
]


def invoke(argv):
    """运行命令行并捕获输出"""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = run_cli(argv)
    return code, out.getvalue(), err.getvalue()


class TestCommandLine(unittest.TestCase):
    """命令行测试类"""

    def setUp(self):
        """测试前准备"""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.ckpt = self.temp_dir / 'model.ckpt'
        self.env = patch.dict(os.environ)
        self.env.start()
        os.environ.pop('MLN_SEED', None)

    def tearDown(self):
        """测试后清理"""
        self.env.stop()
        shutil.rmtree(self.temp_dir)

    def train(self, *extra):
        return invoke(['train', '--out', str(self.ckpt), '--episodes', '3'] + SMALL_MODEL + list(extra))

    def test_train_writes_checkpoint_and_metrics(self):
        """测试训练生成检查点与指标文件"""
        code, _, err = self.train()
        self.assertEqual(code, 0, err)
        self.assertEqual(load_checkpoint(self.ckpt).episode, 3)
        lines = (self.temp_dir / 'model.ckpt.metrics.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], 'episode,loss,train_acc,lr')
        self.assertEqual(len(lines), 4)

    def test_train_custom_metrics_and_saved_config(self):
        """测试自定义指标路径与保存配置"""
        metrics = self.temp_dir / 'out' / 'm.csv'
        saved = self.temp_dir / 'effective.ini'
        code, _, err = self.train('--metrics', str(metrics), '--save-config', str(saved))
        self.assertEqual(code, 0, err)
        self.assertTrue(metrics.exists())
        self.assertIn('widths = 12,10', saved.read_text(encoding='utf-8'))

    def test_eval_prints_and_saves_report(self):
        """测试评估输出并保存报告"""
        self.assertEqual(self.train()[0], 0)
        code, out, err = invoke(['eval', '--ckpt', str(self.ckpt), '--way', '5', '--shots', '1',
                                 '--queries', '2', '--episodes', '10', '--workers', '2'] + SMALL_MODEL)
        self.assertEqual(code, 0, err)
        lines = out.splitlines()
        self.assertIn('way,shots,episodes,mean_acc,ci95', lines)
        row = lines[lines.index('way,shots,episodes,mean_acc,ci95') + 1]
        self.assertTrue(row.startswith('5,1,10,'))
        report = (self.temp_dir / 'model.ckpt.eval.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(report, ['way,shots,episodes,mean_acc,ci95', row])

    def test_eval_per_episode_and_baseline(self):
        """测试逐episode输出与基线"""
        self.assertEqual(self.train()[0], 0)
        per_episode = self.temp_dir / 'episodes.csv'
        report = self.temp_dir / 'report.csv'
        code, _, err = invoke(['eval', '--ckpt', str(self.ckpt), '--episodes', '4', '--queries', '2',
                               '--per-episode', str(per_episode), '--report', str(report),
                               '--baseline'] + SMALL_MODEL)
        self.assertEqual(code, 0, err)
        self.assertEqual(len(per_episode.read_text(encoding='utf-8').splitlines()), 5)
        self.assertTrue(report.exists())

    def test_inspect_to_stdout_and_file(self):
        """测试诊断输出到标准输出与文件"""
        self.assertEqual(self.train()[0], 0)
        code, out, err = invoke(['inspect', '--ckpt', str(self.ckpt), '--way', '3'] + SMALL_MODEL)
        self.assertEqual(code, 0, err)
        self.assertTrue(out.startswith('quantity,index_a,index_b,value'))
        residuals = [float(line.split(',')[3]) for line in out.splitlines()
                     if line.startswith('residual_norm')]
        self.assertEqual(len(residuals), 3)
        self.assertLessEqual(max(residuals), 1e-8)

        target = self.temp_dir / 'diag.csv'
        code, _, err = invoke(['inspect', '--ckpt', str(self.ckpt), '--no-relabel',
                               '--out', str(target)] + SMALL_MODEL)
        self.assertEqual(code, 0, err)
        self.assertIn('trace', target.read_text(encoding='utf-8'))

    def test_seed_environment_overrides_flag(self):
        """测试MLN_SEED优先于命令行种子"""
        os.environ['MLN_SEED'] = '11'
        self.assertEqual(self.train('--seed', '1')[0], 0)
        first = self.ckpt.read_bytes()
        self.assertEqual(self.train('--seed', '2')[0], 0)
        self.assertEqual(self.ckpt.read_bytes(), first)

    def test_unknown_flag(self):
        """测试未知参数返回2并输出用法"""
        code, _, err = invoke(['train', '--out', str(self.ckpt), '--bogus'])
        self.assertEqual(code, 2)
        self.assertIn('usage', err)

    def test_missing_subcommand(self):
        """测试缺少子命令"""
        code, _, err = invoke([])
        self.assertEqual(code, 2)
        self.assertIn('subcommand', err)

    def test_missing_checkpoint(self):
        """测试检查点不存在时输出单行错误"""
        code, _, err = invoke(['eval', '--ckpt', str(self.temp_dir / 'none.ckpt')] + SMALL_MODEL)
        self.assertEqual(code, 1)
        lines = err.strip().splitlines()
        self.assertEqual(len(lines), 1)
        self.assertTrue(lines[0].startswith('error: FileNotFoundError: '))

    def test_corrupt_checkpoint(self):
        """测试损坏的检查点"""
        self.assertEqual(self.train()[0], 0)
        blob = bytearray(self.ckpt.read_bytes())
        blob[50] ^= 0x10
        self.ckpt.write_bytes(bytes(blob))
        code, _, err = invoke(['eval', '--ckpt', str(self.ckpt)] + SMALL_MODEL)
        self.assertEqual(code, 1)
        self.assertTrue(err.startswith('error: ChecksumError: '))

    def test_dataset_mismatch(self):
        """测试检查点与数据集维度不一致"""
        self.assertEqual(self.train()[0], 0)
        code, _, err = invoke(['eval', '--ckpt', str(self.ckpt), '-q', '--set', 'LOGGING.file='])
        self.assertEqual(code, 1)
        self.assertTrue(err.startswith('error: ConfigError: '))

    def test_invalid_configuration(self):
        """测试非法配置"""
        code, _, err = invoke(['train', '--out', str(self.ckpt), '--episodes', '1'] + SMALL_MODEL
                               + ['--set', 'TRAIN.way=40'])
        self.assertEqual(code, 1)
        self.assertIn('ConfigError', err)
        code, _, err = invoke(['train', '--out', str(self.ckpt), '--episodes', '1'] + SMALL_MODEL
                               + ['--set', 'TRAIN.nope=1'])
        self.assertEqual(code, 1)
        self.assertFalse(self.ckpt.exists())

    def test_list_presets(self):
        """测试列出预设"""
        code, out, _ = invoke(['--list-presets'])
        self.assertEqual(code, 0)
        self.assertIn('desk-synthetic', out)

    def test_parser_requires_output(self):
        """测试train必须指定输出路径"""
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                create_argument_parser().parse_args(['train'])


if __name__ == '__main__':
    unittest.main()
