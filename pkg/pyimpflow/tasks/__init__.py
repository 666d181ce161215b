from .timegrid import TimeGrid, make_time_grid
from .task import TaskId, Task, energy_drift
from .nloscillator import NLOscillator, nl_hamiltonian, nl_equations_of_motion, nl_loss
from .henonheiles import HenonHeiles, hh_hamiltonian, hh_equations_of_motion, hh_loss

__all__ = ['TimeGrid', 'make_time_grid', 'TaskId', 'Task', 'energy_drift',
           'NLOscillator', 'nl_hamiltonian', 'nl_equations_of_motion', 'nl_loss',
           'HenonHeiles', 'hh_hamiltonian', 'hh_equations_of_motion', 'hh_loss',
           'TASKS', 'ALIASES', 'make_task']

TASKS = {TaskId.NL_OSCILLATOR: NLOscillator,
         TaskId.HENON_HEILES: HenonHeiles}

# Short names accepted on the command line and in config files
ALIASES = {'nl': TaskId.NL_OSCILLATOR, 'hh': TaskId.HENON_HEILES}


def make_task(task_id, **kwargs):
    """
    Build a task from its identifier ('nl_oscillator', 'henon_heiles', or the
    short forms 'nl', 'hh'). Keyword arguments go to the task constructor.
    """
    key = ALIASES.get(task_id, task_id)
    return TASKS[TaskId(key)](**kwargs)

