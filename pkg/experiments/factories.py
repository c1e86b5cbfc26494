import factory

from .models import ExperimentRun


class ExperimentRunFactory(factory.django.DjangoModelFactory):
    class Meta:
        model = ExperimentRun

    kind = 'estimation-sweep'
    seed = factory.Sequence(lambda n: 20170 + n)
    config = factory.LazyAttribute(lambda run: {'kind': run.kind, 'seed': run.seed, 'reps': 10})
    output_path = factory.LazyAttribute(lambda run: f'results/{run.kind}')
    status = 'completed'
    summary = factory.LazyAttribute(lambda run: {'files': {}})
