#!/usr/bin/env python3
"""
项目配置文件 - 统一配置管理
默认配置 + config.yaml 递归合并，支持点号路径访问
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

CONFIG_ENV_VAR = "CRDA_CONFIG"
WORKERS_ENV_VAR = "CRDA_WORKERS"


class ProjectConfig:
    """项目配置管理"""

    def __init__(self, config_file: Optional[str] = None, values: Optional[Dict[str, Any]] = None):
        self.config_file = config_file or os.environ.get(CONFIG_ENV_VAR, "config.yaml")
        if values is not None:
            self.config = self._get_default_config()
            self._merge_config(self.config, copy.deepcopy(values))
        else:
            self.config = self.load_config()

    def load_config(self) -> Dict[str, Any]:
        """加载配置文件，缺失或损坏时回退到默认配置"""
        config = self._get_default_config()
        config_path = Path(self.config_file)

        if not config_path.exists():
            print(f"[WARNING] 配置文件 {self.config_file} 不存在，使用默认配置")
            return config

        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                loaded_config = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            print(f"[WARNING] 配置文件加载失败，使用默认配置: {e}")
            return config

        if not isinstance(loaded_config, dict):
            print(f"[WARNING] 配置文件 {self.config_file} 顶层不是映射，使用默认配置")
            return config

        self._merge_config(config, loaded_config)
        return config

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return {
            "data": {
                "label_column": "class",
                "encoding": "utf-8"
            },
            "numerics": {
                "rank_tol": 1e-10,
                "alpha_ceiling": 1.0 - 1e-6
            },
            "selection": {
                "folds": 5,
                "eps_floor_fraction": 0.15,
                "eps_floor_basis": "fold",
                "alpha_grid_size": 25,
                "k_grid_size": 100,
                "delta_grid_size": 25,
                "seed": 0
            },
            "simulation": {
                "scale": 1.0,
                "multinomial_labels": False
            },
            "performance": {
                "max_concurrent": None
            },
            "output": {
                "output_dir": "runs",
                "table_formats": ["csv", "markdown"]
            }
        }

    def _merge_config(self, default: dict, loaded: dict):
        """递归合并配置"""
        for key, value in loaded.items():
            if key in default and isinstance(default[key], dict) and isinstance(value, dict):
                self._merge_config(default[key], value)
            else:
                default[key] = value

    def get(self, key_path: str, default=None):
        """获取配置值，支持点号路径"""
        value = self.config

        for key in key_path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return value

    def get_worker_count(self) -> int:
        """并发数：配置 > 环境变量 > CPU核数"""
        configured = self.get("performance.max_concurrent")
        if configured is None:
            configured = os.environ.get(WORKERS_ENV_VAR)
        if configured is None:
            return os.cpu_count() or 1
        return max(1, int(configured))

    def as_dict(self) -> Dict[str, Any]:
        """返回配置的深拷贝"""
        return copy.deepcopy(self.config)

    def save_config(self, path: Optional[str] = None):
        """保存配置到YAML文件"""
        target = Path(path or self.config_file)
        with open(target, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.config, f, default_flow_style=False, allow_unicode=True, sort_keys=True)


# 全局配置实例
_global_config = None


def get_config() -> ProjectConfig:
    """获取全局配置实例"""
    global _global_config
    if _global_config is None:
        _global_config = ProjectConfig()
    return _global_config


def reload_config(config_file: Optional[str] = None) -> ProjectConfig:
    """重新加载配置"""
    global _global_config
    _global_config = ProjectConfig(config_file)
    return _global_config


def use_config_values(values: Dict[str, Any]) -> ProjectConfig:
    """以给定的配置字典（例如运行回显中的 config 段）替换全局配置"""
    global _global_config
    _global_config = ProjectConfig(values=values or {})
    return _global_config


if __name__ == "__main__":
    cfg = get_config()
    print("=== 配置系统测试 ===")
    print(f"标签列: {cfg.get('data.label_column')}")
    print(f"秩阈值: {cfg.get('numerics.rank_tol')}")
    print(f"CV折数: {cfg.get('selection.folds')}")
    print(f"并发数: {cfg.get_worker_count()}")
    print("配置系统测试完成")
