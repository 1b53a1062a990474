#!/usr/bin/env python3
"""
测试配置管理模块
"""

import unittest
import tempfile
import os
import sys
from pathlib import Path
from unittest.mock import patch

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.config_manager import ConfigManager
from core.errors import ConfigError


class TestConfigManager(unittest.TestCase):
    """配置管理器测试类"""

    def setUp(self):
        """测试前设置"""
        self.env = patch.dict(os.environ)
        self.env.start()
        os.environ.pop('MLN_SEED', None)
        self.config_manager = ConfigManager()
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """测试后清理"""
        import shutil
        self.env.stop()
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def write_ini(self, text):
        path = Path(self.temp_dir) / 'test_config.ini'
        path.write_text(text, encoding='utf-8')
        return str(path)

    def test_default_config_initialization(self):
        """测试默认配置初始化"""
        self.assertEqual(self.config_manager.model_config.widths, [64, 32])
        self.assertEqual(self.config_manager.train_config.way, 20)
        self.assertEqual(self.config_manager.train_config.queries, 5)
        self.assertEqual(self.config_manager.eval_config.way, 5)
        self.assertEqual(self.config_manager.dataset_config.source, 'gaussian-synthetic')
        self.assertEqual(self.config_manager.validate_config(), [])

    def test_derived_configs(self):
        """测试派生的嵌入与分类头配置"""
        self.config_manager.model_config.widths = [40, 24]
        self.config_manager.dataset_config.synthetic_dim = 9
        embedding = self.config_manager.embedding_config()
        head = self.config_manager.head_config()
        self.assertEqual(embedding.input_dim, 9)
        self.assertEqual(head.dim, 24)
        self.assertEqual(head.n_ref, 20)

    def test_preset(self):
        """测试预设"""
        self.assertIn('desk-synthetic', ConfigManager.load_presets())
        config = ConfigManager(preset='omniglot-20way')
        self.assertEqual(config.train_config.way, 60)
        self.assertTrue(config.dataset_config.rotate)
        self.assertEqual(config.model_config.widths, [256, 128, 64])
        with self.assertRaises(ConfigError):
            ConfigManager(preset='no-such-preset')

    def test_file_overrides_preset(self):
        """测试配置文件优先于预设"""
        path = self.write_ini("[TRAIN]\nway = 7\n\n[MODEL]\nwidths = 16, 12\n")
        config = ConfigManager(config_file=path, preset='omniglot-20way')
        self.assertEqual(config.train_config.way, 7)
        self.assertEqual(config.train_config.episodes, 40000)
        self.assertEqual(config.model_config.widths, [16, 12])

    def test_config_file_errors(self):
        """测试配置文件错误"""
        with self.assertRaises(ConfigError):
            ConfigManager(config_file=str(Path(self.temp_dir) / 'missing.ini'))
        with self.assertRaises(ConfigError):
            ConfigManager(config_file=self.write_ini("[TRAIN]\nwayy = 7\n"))
        with self.assertRaises(ConfigError):
            ConfigManager(config_file=self.write_ini("[TRAIN]\nway = seven\n"))

    def test_config_file_save_load(self):
        """测试配置文件保存和加载"""
        config_file = Path(self.temp_dir) / 'saved.ini'

        # 修改一些配置
        self.config_manager.train_config.way = 10
        self.config_manager.train_config.logit_mode = 'projected-inner-product'
        self.config_manager.model_config.widths = [48, 24]
        self.config_manager.dataset_config.rotate = True

        # 保存配置
        self.config_manager.save_config(str(config_file))
        self.assertTrue(config_file.exists())

        # 创建新的配置管理器并加载配置
        new_config_manager = ConfigManager(config_file=str(config_file))
        self.assertEqual(new_config_manager.as_dict(), self.config_manager.as_dict())

    def test_overrides(self):
        """测试SECTION.key=value覆盖"""
        self.config_manager.apply_overrides(['TRAIN.way=8', 'model.widths=16,8',
                                             'DATASET.rotate=yes', 'TRAIN.learning_rate=5e-4'])
        self.assertEqual(self.config_manager.train_config.way, 8)
        self.assertEqual(self.config_manager.model_config.widths, [16, 8])
        self.assertTrue(self.config_manager.dataset_config.rotate)
        self.assertEqual(self.config_manager.train_config.learning_rate, 5e-4)

        for bad in ('TRAIN.way', 'way=3', 'DATASET.rotate=maybe', 'NOPE.way=1'):
            with self.assertRaises(ConfigError):
                self.config_manager.apply_overrides([bad])

    def test_command_line_args_update(self):
        """测试命令行参数更新"""
        # 模拟命令行参数
        class MockArgs:
            def __init__(self):
                self.command = 'train'
                self.overrides = ['EVAL.queries=4']
                self.episodes = 50
                self.seed = 4
                self.verbose = True
                self.quiet = False

        args = MockArgs()
        self.config_manager.update_from_args(args)

        self.assertEqual(self.config_manager.train_config.episodes, 50)
        self.assertEqual(self.config_manager.eval_config.episodes, 1000)
        self.assertEqual(self.config_manager.train_config.seed, 4)
        self.assertEqual(self.config_manager.eval_config.seed, 4)
        self.assertEqual(self.config_manager.eval_config.queries, 4)
        self.assertEqual(self.config_manager.logging_config.level, 'DEBUG')

    def test_eval_args_update(self):
        """测试评估命令参数"""
        class MockArgs:
            def __init__(self):
                self.command = 'eval'
                self.episodes = 30
                self.way = 3
                self.shots = 5
                self.workers = 'auto'
                self.quiet = True

        self.config_manager.update_from_args(MockArgs())
        self.assertEqual(self.config_manager.eval_config.episodes, 30)
        self.assertEqual(self.config_manager.train_config.episodes, 2000)
        self.assertEqual(self.config_manager.eval_config.way, 3)
        self.assertFalse(self.config_manager.logging_config.console_output)
        self.assertGreaterEqual(self.config_manager.eval_workers(), 1)

    def test_seed_environment_variable(self):
        """测试MLN_SEED环境变量优先"""
        os.environ['MLN_SEED'] = '123'
        config = ConfigManager(config_file=self.write_ini("[TRAIN]\nseed = 5\n"))
        self.assertEqual(config.train_config.seed, 123)

        class MockArgs:
            seed = 9

        config.update_from_args(MockArgs())
        self.assertEqual(config.eval_config.seed, 123)

        os.environ['MLN_SEED'] = 'abc'
        with self.assertRaises(ConfigError):
            ConfigManager()

    def test_config_validation(self):
        """测试配置验证"""
        self.config_manager.train_config.way = 40
        self.config_manager.eval_config.queries = 0
        self.config_manager.dataset_config.source = 'flat-binary'
        errors = self.config_manager.validate_config()
        self.assertTrue(any('exceeds reference count' in e for e in errors))
        self.assertTrue(any('must exceed training way' in e for e in errors))
        self.assertTrue(any('eval queries' in e for e in errors))
        self.assertTrue(any('needs [DATASET] path' in e for e in errors))

    def test_dataset_split(self):
        """测试数据集划分解析"""
        self.config_manager.dataset_config.source = 'flat-binary'
        self.config_manager.dataset_config.path = 'data.bin'
        self.config_manager.dataset_config.split = '30, 5, 10'
        self.assertEqual(self.config_manager.dataset_spec().split_counts, (30, 5, 10))
        self.config_manager.dataset_config.split = '30,5'
        with self.assertRaises(ConfigError):
            self.config_manager.dataset_spec()

    def test_invalid_workers(self):
        """测试非法线程数"""
        self.config_manager.eval_config.workers = 'many'
        with self.assertRaises(ConfigError):
            self.config_manager.eval_workers()


if __name__ == '__main__':
    unittest.main()
