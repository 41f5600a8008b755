"""Loading of JSON settings files and their command-line arguments."""
import json
import os


config_suffix = '.json'


def config_load(path):
    with open(path) as f:
        return json.load(f)


def config_path(configs_path, name):
    """Resolve a settings name inside configs_path, or an explicit path."""
    if os.path.isfile(name):
        return name
    if not name.endswith(config_suffix):
        name = name + config_suffix
    return os.path.join(configs_path, name)


def add_config_arguments(parser, configs_path, default_name):
    parser.add_argument(
        '--config', '-c', type=str, default=default_name,
        help=(
            'Name of a settings file in {}, or path to a settings file. '
            'Default: {}'.format(configs_path, default_name)
        )
    )
    parser.set_defaults(configs_path=configs_path)


def load_config_from_args(args):
    path = config_path(args.configs_path, args.config)
    if not os.path.isfile(path):
        raise FileNotFoundError('No settings file at {}'.format(path))
    return config_load(path)
