"""The on-disk layout of a grayrank workspace.

Terminology:
- a "workspace" is a directory holding a config.toml, the raw corpus
  files, and everything the pipeline stages derive from them
- an "artifact" is a file produced by a stage (vocab, index, language
  model, generated responses, grayscale sets, checkpoint); each artifact
  has a configurable path relative to the workspace
- a "manifest" records, for one stage, the code version, the config hash
  and the SHA-256 of every input and output file; manifests live in
  manifests/<stage>.json next to the resolved config the stage ran with

The Workspace class is the main entry point. Like the config, it holds
nothing in memory beyond its path; everything is read from disk on
request.
"""


import json
from pathlib import Path
from git import Repo
import toml
import grayrank
from grayrank import _fsutil
from grayrank import config as config_module


_DEFAULT_GITIGNORE = """.DS_Store
__pycache__/
"""

_DIRS = ('raw', 'data', 'artifacts', 'manifests', 'reports')

# artifact name -> stage that produces it
PRODUCERS = {
    'train': 'ingest --make-synthetic',
    'valid': 'ingest --make-synthetic',
    'test': 'ingest --make-synthetic',
    'vocab': 'ingest',
    'index': 'build-index',
    'lm': 'train-lm',
    'generated': 'generate',
    'grayscale': 'build-grayscale',
    'checkpoint': 'train',
}

STAGES = ('ingest', 'build-index', 'train-lm', 'generate', 'build-grayscale',
          'train', 'evaluate', 'sweep-margin', 'ablate')


class MissingArtifactError(Exception):
    """Indicates a stage input that has not been produced yet."""
    def __init__(self, artifact, stage, path=None):
        self.artifact = artifact
        self.stage = stage
        self.path = path
        where = f' ({path})' if path else ''
        super().__init__(f'missing {artifact}{where}; run `grayrank {stage}` '
                         'first')


class ArtifactVersionError(Exception):
    """Indicates an artifact written by an incompatible format version."""
    def __init__(self, path, header):
        self.path = path
        self.header = header
        super().__init__(f'{path}: unsupported artifact header {header!r}')


class Workspace:
    """Helps access a workspace stored in a given directory.

    Attributes:
    - path - the pathlib.Path to the workspace directory
    """
    def __init__(self, path):
        """Creates an instance for the workspace at the given path.

        The path does not need to exist, as initialize can set up a new
        workspace.
        """
        self.path = Path(path)
        self.config_path = self.path.joinpath('config.toml')
        self.raw_path = self.path.joinpath('raw')
        self.manifests_path = self.path.joinpath('manifests')

    def initialize(self, *, git=False):
        """Ensures the workspace dirs and a default config.toml exist.

        If git=True, a git repo and .gitignore file will also be set up.
        Only missing dirs/files are created, so it's safe to call on an
        existing workspace.
        """
        self.path.mkdir(exist_ok=True, parents=True)
        for name in _DIRS:
            self.path.joinpath(name).mkdir(exist_ok=True)

        if not self.config_path.exists():
            text = config_module.DEFAULT_CONFIG_TOML
            if git:
                text += 'git = true\n'
            self.config_path.write_text(text)

        if git:
            if not self.path.joinpath('.git').exists():
                Repo.init(str(self.path))
            gitignore_path = self.path.joinpath('.gitignore')
            if not gitignore_path.exists():
                gitignore_path.write_text(_DEFAULT_GITIGNORE)
            self._commit('[grayrank] initialize',
                         ['.gitignore', 'config.toml'])

    def read_config(self, overrides=()):
        """Returns the resolved config: defaults, config.toml, overrides.

        Raises ConfigError for an invalid file or override.
        """
        if not self.config_path.is_file():
            raise config_module.ConfigError(
                f'{self.config_path} is not a file; run `grayrank init`')
        return config_module.load(self.config_path, overrides)

    def is_git(self):
        """Returns True if the workspace's config enables git commits."""
        if not self.config_path.is_file():
            return False
        return bool(toml.load(self.config_path).get('git'))

    def _commit(self, message, add=()):
        if self.is_git():
            repo = Repo(str(self.path))
            add = [p for p in add if not Path(p).is_absolute()
                   and self.path.joinpath(p).exists()]
            if add:
                repo.index.add(add)
            if repo.is_dirty():
                repo.index.commit(message)

    def artifact_path(self, cfg, name):
        """Returns the pathlib.Path configured for an artifact.

        The raw split files are train/valid/test; data_<split> names the
        normalized copy written by ingest.
        """
        if name.startswith('data_'):
            return self.data_path(cfg, name[len('data_'):])
        return self.path.joinpath(cfg['paths'][name])

    def data_path(self, cfg, split):
        return self.path.joinpath(cfg['paths']['data'], f'{split}.txt')

    def reports_path(self, cfg):
        path = self.path.joinpath(cfg['paths']['reports'])
        path.mkdir(exist_ok=True, parents=True)
        return path

    def require(self, cfg, name):
        """Returns the artifact's path, or raises MissingArtifactError."""
        path = self.artifact_path(cfg, name)
        if not path.is_file():
            stage = ('ingest' if name.startswith('data_')
                     else PRODUCERS[name])
            raise MissingArtifactError(name, stage, self._relative(path))
        return path

    def _relative(self, path):
        path = Path(path)
        try:
            return str(path.relative_to(self.path))
        except ValueError:
            return str(path)

    def manifest_path(self, stage):
        return self.manifests_path.joinpath(f'{stage}.json')

    def write_manifest(self, stage, cfg, inputs, outputs):
        """Records a completed stage, then commits if git is enabled.

        inputs and outputs map names to file paths. The resolved config is
        written to manifests/<stage>.config.toml alongside.
        """
        self.manifests_path.mkdir(exist_ok=True, parents=True)
        manifest = {
            'stage': stage,
            'version': grayrank.__version__,
            'config_hash': config_module.config_hash(cfg),
            'inputs': self._describe(inputs),
            'outputs': self._describe(outputs),
        }
        self.manifest_path(stage).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + '\n')
        config_copy = self.manifests_path.joinpath(f'{stage}.config.toml')
        config_copy.write_text(config_module.dumps(cfg))
        added = [self._relative(self.manifest_path(stage)),
                 self._relative(config_copy)]
        added += [self._relative(p) for p in outputs.values()]
        self._commit(f'[grayrank] {stage}', added)
        return manifest

    def _describe(self, paths):
        return {name: {'path': self._relative(path),
                       'sha256': _fsutil.file_digest(Path(path))}
                for name, path in paths.items()}

    def read_manifest(self, stage):
        """Returns the stage's manifest dict, or None if it never ran."""
        path = self.manifest_path(stage)
        if not path.is_file():
            return None
        return json.loads(path.read_text())

    def stale_inputs(self, stage):
        """Returns names of the stage's inputs that changed since it ran.

        A deleted input counts as changed. Returns [] if the stage has no
        manifest.
        """
        manifest = self.read_manifest(stage)
        if not manifest:
            return []
        stale = []
        for name, entry in manifest['inputs'].items():
            path = self.path.joinpath(entry['path'])
            if _fsutil.file_digest(path) != entry['sha256']:
                stale.append(name)
        return stale
