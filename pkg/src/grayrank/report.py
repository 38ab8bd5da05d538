"""Generates reports summarizing a workspace's pipeline status."""


import csv
from grayrank import _fsutil
from grayrank import config as config_module
from grayrank.workspace import PRODUCERS
from grayrank.workspace import STAGES


def text_table(header, rows, indent=''):
    """Returns rows of strings as a left-aligned plain-text table."""
    widths = [max([len(r[i]) for r in [header] + rows])
              for i in range(len(header))]
    fmt = '  '.join('{:<' + str(w) + '}' for w in widths)
    hrow = fmt.format(*header).rstrip() + '\n'
    divrow = ('-' * (len(hrow) - 1)) + '\n'
    result = indent + hrow + indent + divrow
    for row in rows:
        result += indent + fmt.format(*row).rstrip() + '\n'
    return result


class WorkspaceReport:
    """A report summarizing one workspace.

    The report's data is initialized in attributes by the constructor:
    - manifests: dict of stage to manifest, for stages that have run
    - sizes: dict of artifact name to its size in bytes, for artifacts
             on disk
    - missing: list of (artifact, stage) for artifacts not on disk
    - stale: dict of stage to the names of inputs that changed on disk
             since the stage ran
    - config_changed: stages whose recorded config hash differs from
                      the current config
    - metrics: rows of reports/metrics.csv as dicts, or []
    """
    def __init__(self, workspace, cfg):
        self.workspace = workspace
        self.manifests = {}
        self.sizes = {}
        self.missing = []
        self.stale = {}
        self.config_changed = []
        self.metrics = []

        for name, stage in PRODUCERS.items():
            if name == 'generated' and cfg['generator']['external']:
                continue
            path = workspace.artifact_path(cfg, name)
            if path.is_file():
                self.sizes[name] = _fsutil.total_size_bytes(path)
            else:
                self.missing.append((name, stage))

        current = config_module.config_hash(cfg)
        for stage in STAGES:
            manifest = workspace.read_manifest(stage)
            if not manifest:
                continue
            self.manifests[stage] = manifest
            stale = workspace.stale_inputs(stage)
            if stale:
                self.stale[stage] = stale
            if manifest['config_hash'] != current:
                self.config_changed.append(stage)

        metrics_path = workspace.path.joinpath(cfg['paths']['reports'],
                                               'metrics.csv')
        if metrics_path.is_file():
            with open(metrics_path) as file:
                self.metrics = list(csv.DictReader(file))

        self.has_warnings = bool(self.missing or self.stale)

    def plaintext(self):
        """Returns a plaintext string with the report results."""
        result = ''

        if self.missing:
            result += 'WARNING: missing artifacts: '
            result += ', '.join(f'{name} (run {stage})'
                                for name, stage in self.missing)
            result += '\n'

        for stage, inputs in self.stale.items():
            result += f'WARNING: {stage} is stale; changed inputs: '
            result += ', '.join(inputs) + '\n'

        if self.has_warnings:
            result += '\n'
        else:
            result += 'No warnings!\n\n'

        if self.manifests:
            rows = []
            for stage, manifest in self.manifests.items():
                note = ('config changed' if stage in self.config_changed
                        else '')
                rows.append([stage, manifest['version'],
                             manifest['config_hash'][:12], note])
            result += 'Stages run:\n\n'
            result += text_table(['stage', 'version', 'config', ''], rows,
                                 indent='  ')
        else:
            result += 'No stages have run yet.\n'

        if self.sizes:
            rows = [[name, str(size)] for name, size in self.sizes.items()]
            result += '\nArtifacts:\n\n'
            result += text_table(['artifact', 'bytes'], rows, indent='  ')

        if self.metrics:
            header = list(self.metrics[0].keys())
            rows = [[row[k] for k in header] for row in self.metrics]
            result += '\nLatest metrics:\n\n'
            result += text_table(header, rows, indent='  ')

        return result
