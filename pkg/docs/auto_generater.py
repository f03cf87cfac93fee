# -*- coding: utf-8 -*-

import importlib
import inspect
import os


def get_class_funcs(module):
  classes, functions, others = [], [], []
  if "__all__" in module.__dict__:
    names = module.__dict__["__all__"]
  else:
    names = [x for x in module.__dict__ if not x.startswith("_")]
  for k in names:
    data = getattr(module, k)
    if not inspect.ismodule(data) and not k.startswith("_"):
      if inspect.isfunction(data):
        functions.append(k)
      elif isinstance(data, type):
        classes.append(k)
      else:
        others.append(k)
  return classes, functions, others


def _write_autosummary(fout, module, template=True):
  classes, functions, others = get_class_funcs(module)
  fout.write('.. autosummary::\n')
  fout.write('   :toctree: generated/\n')
  fout.write('   :nosignatures:\n')
  if template:
    fout.write('   :template: classtemplate.rst\n')
  fout.write('\n')
  for m in functions + classes + others:
    fout.write(f'   {m}\n')
  fout.write('\n\n')


def _write_module(module_name, automodule, filename, header=None):
  module = importlib.import_module(module_name)
  header = f'``{module_name}`` module' if header is None else header
  with open(filename, 'w') as fout:
    fout.write(header + '\n')
    fout.write('=' * len(header) + '\n\n')
    fout.write(f'.. currentmodule:: {automodule} \n')
    fout.write(f'.. automodule:: {automodule} \n\n')
    _write_autosummary(fout, module)


def _write_submodules(module_name, filename, header=None, submodule_names=(), section_names=()):
  header = f'``{module_name}`` module' if header is None else header
  with open(filename, 'w') as fout:
    fout.write(header + '\n')
    fout.write('=' * len(header) + '\n\n')
    fout.write(f'.. currentmodule:: {module_name} \n')
    fout.write(f'.. automodule:: {module_name} \n\n')
    for name, section in zip(submodule_names, section_names):
      fout.write(section + '\n')
      fout.write('-' * len(section) + '\n\n')
      _write_autosummary(fout, importlib.import_module(module_name + '.' + name))


def main():
  os.makedirs('apis/', exist_ok=True)

  _write_submodules(
    module_name='soibart',
    filename='apis/soibart.rst',
    header='``soibart`` module',
    submodule_names=['_bart', '_sampler', '_tree', '_errors'],
    section_names=['Model and Posterior', 'MCMC Sampler', 'Decision Trees', 'Errors'],
  )

  _write_submodules(
    module_name='soibart.data',
    filename='apis/soibart.data.rst',
    header='``soibart.data`` module',
    submodule_names=['series', 'ingest', 'dataset'],
    section_names=['Monthly Series', 'Reading and Writing Records', 'Lag Matrices, Splits and Metrics'],
  )

  _write_submodules(
    module_name='soibart.forecast',
    filename='apis/soibart.forecast.rst',
    header='``soibart.forecast`` module',
    submodule_names=['autoregressive', 'iterate', 'backtest'],
    section_names=['Linear Autoregression', 'Iterated Forecasts', 'Horizon Backtests'],
  )

  _write_submodules(
    module_name='soibart.diagnostics',
    filename='apis/soibart.diagnostics.rst',
    header='``soibart.diagnostics`` module',
    submodule_names=['spectral', 'plots'],
    section_names=['Periodogram and Correlograms', 'Figures'],
  )

  _write_module(module_name='soibart.harness',
                automodule='soibart.harness',
                filename='apis/soibart.harness.rst',
                header='Reproduction Presets')
