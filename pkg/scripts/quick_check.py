#!/usr/bin/env python3
"""
快速检查脚本 - 验证项目环境、依赖、配置和数值核心

用法: python scripts/quick_check.py [--skip-train]
"""

import sys
import time
from pathlib import Path

# 添加项目根目录到路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# 颜色定义
class Colors:
    GREEN = '\033[92m'
    RED = '\033[91m'
    YELLOW = '\033[93m'
    BLUE = '\033[94m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'

REQUIRED_PACKAGES = ['numpy', 'scipy', 'tqdm', 'colorama', 'pathvalidate']
OPTIONAL_PACKAGES = ['torch', 'psutil']


def print_status(message, status, details=""):
    """打印状态信息"""
    marks = {"OK": Colors.GREEN + "✓", "WARNING": Colors.YELLOW + "⚠"}
    print(f"{marks.get(status, Colors.RED + '✗')}{Colors.ENDC} {message}")
    if details:
        print(f"    {details}")


def section(title):
    print(f"{Colors.BLUE}{title}{Colors.ENDC}")
    print("-" * 40)


def check_python_version():
    """检查Python版本"""
    version_str = ".".join(str(part) for part in sys.version_info[:3])
    if sys.version_info >= (3, 9):
        print_status(f"Python版本: {version_str}", "OK")
        return True
    print_status(f"Python版本: {version_str}", "ERROR", "需要Python 3.9或更高版本")
    return False


def check_packages():
    """必需依赖导入失败为错误，可选依赖只给出警告"""
    all_ok = True
    for name in REQUIRED_PACKAGES + OPTIONAL_PACKAGES:
        optional = name in OPTIONAL_PACKAGES
        try:
            module = __import__(name)
            print_status(f"Python包 {name} {getattr(module, '__version__', '')}".rstrip(), "OK")
        except ImportError:
            if optional:
                print_status(f"Python包 {name}", "WARNING", "可选依赖未安装")
            else:
                print_status(f"Python包 {name}", "ERROR", f"无法导入 {name}")
                all_ok = False
    return all_ok


def check_core_modules():
    """导入 core/ 下的全部模块"""
    all_ok = True
    for path in sorted((project_root / 'core').glob('*.py')):
        module = 'core' if path.stem == '__init__' else f"core.{path.stem}"
        try:
            __import__(module)
            print_status(f"模块 {module}", "OK")
        except ImportError as e:
            print_status(f"模块 {module}", "ERROR", str(e))
            all_ok = False
    return all_ok


def check_configuration():
    """默认配置与每个预设都能通过校验"""
    try:
        from core.config_manager import ConfigManager
        from core.errors import ConfigError

        all_ok = True
        presets = ConfigManager.load_presets()
        for name in [None] + sorted(presets):
            label = name or '默认配置'
            try:
                problems = ConfigManager(preset=name).validate_config()
            except ConfigError as e:
                problems = [str(e)]
            # 基于文件的预设缺少数据路径属于正常情况
            problems = [p for p in problems if 'needs [DATASET] path' not in p]
            if problems:
                print_status(f"配置 {label}", "ERROR", "; ".join(problems))
                all_ok = False
            else:
                print_status(f"配置 {label}", "OK")
        return all_ok
    except Exception as e:
        print_status("配置", "ERROR", str(e))
        return False


def check_projector_algebra():
    """在随机实例上检查投影矩阵的零化性质"""
    try:
        import numpy as np
        from core.autodiff import Tensor
        from core.numeric import RngStream
        from core.nulling_head import PrototypeSet, build_projector, error_vectors, zero_forcing_residuals

        rng = RngStream(0)
        refs = rng.normal(size=(5, 16))
        protos = PrototypeSet(protos=Tensor(rng.normal(size=(5, 16))),
                              slots=np.arange(5))
        errs = error_vectors(refs, protos)
        projector = build_projector(errs)
        residual = float(zero_forcing_residuals(errs, projector).max())
        status = "OK" if residual <= 1e-8 else "ERROR"
        print_status("零化投影", status, f"max ||P v_k|| = {residual:.2e}, trace = {projector.trace:.1f}")
        return status == "OK"
    except Exception as e:
        print_status("零化投影", "ERROR", str(e))
        return False


def check_train_and_checkpoint():
    """训练几个episode，检查点往返一致，并完成一次小规模评估"""
    try:
        from core.checkpoint import from_bytes
        from core.config_manager import TrainConfig
        from core.embedding import EmbeddingConfig
        from core.episodes import DatasetSpec, EpisodeSampler
        from core.evaluator import FewShotEvaluator
        from core.nulling_head import HeadConfig
        from core.trainer import MetaTrainer

        started = time.perf_counter()
        sampler = EpisodeSampler(DatasetSpec(synthetic_dim=8))
        trainer = MetaTrainer(EmbeddingConfig(input_dim=8, widths=[16, 12]), HeadConfig(dim=12, n_ref=6),
                              TrainConfig(episodes=5, way=5, shots=1, queries=3), sampler)
        checkpoint = trainer.train_loop()
        print_status("训练", "OK", f"{checkpoint.episode} episodes, 最后损失 {trainer.metrics[-1].loss:.4f}")

        if not from_bytes(checkpoint.to_bytes()).same_as(checkpoint):
            print_status("检查点往返", "ERROR", "读回的检查点与原始不一致")
            return False
        print_status("检查点往返", "OK")

        report = FewShotEvaluator(checkpoint, sampler).evaluate(5, 1, 3, 20, seed=0)
        print_status("评估", "OK", f"{report.summary()} ({time.perf_counter() - started:.1f}s)")
        return True
    except Exception as e:
        print_status("训练/评估", "ERROR", f"{type(e).__name__}: {e}")
        return False


def main(argv=None):
    """主函数"""
    argv = sys.argv[1:] if argv is None else argv
    print(f"{Colors.BOLD}{'='*60}{Colors.ENDC}")
    print(f"{Colors.BOLD}           MetaNulling 项目环境检查{Colors.ENDC}")
    print(f"{Colors.BOLD}{'='*60}{Colors.ENDC}")
    print()

    steps = [
        ("1. 基础环境检查", check_python_version),
        ("2. Python依赖检查", check_packages),
        ("3. 核心模块检查", check_core_modules),
        ("4. 配置与预设检查", check_configuration),
        ("5. 数值核心检查", check_projector_algebra),
    ]
    if '--skip-train' not in argv:
        steps.append(("6. 训练与检查点检查", check_train_and_checkpoint))

    checks = []
    for title, check in steps:
        section(title)
        checks.append(check())
        print()

    # 总结
    print(f"{Colors.BOLD}{'='*60}{Colors.ENDC}")
    print(f"{Colors.BOLD}                检查结果总结{Colors.ENDC}")
    print(f"{Colors.BOLD}{'='*60}{Colors.ENDC}")

    passed_checks = sum(checks)
    if passed_checks == len(checks):
        print(f"{Colors.GREEN}✅ 所有检查通过！ ({passed_checks}/{len(checks)}){Colors.ENDC}")
        return 0
    print(f"{Colors.RED}❌ {len(checks) - passed_checks} 个检查失败 ({passed_checks}/{len(checks)}){Colors.ENDC}")
    print(f"{Colors.YELLOW}请根据上述错误信息修复环境问题。{Colors.ENDC}")
    return 1


if __name__ == '__main__':
    sys.exit(main())
