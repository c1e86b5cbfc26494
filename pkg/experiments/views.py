from rest_framework import permissions, viewsets
from rest_framework_simplejwt.authentication import JWTAuthentication

from .models import ExperimentRun
from .serializers import ExperimentRunSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Registro de corridas de los comandos de experimentos.
    Solo lectura: las corridas se crean desde manage.py.
    """
    authentication_classes = [JWTAuthentication]
    permission_classes = [permissions.IsAuthenticated]
    serializer_class = ExperimentRunSerializer

    def get_queryset(self):
        queryset = ExperimentRun.objects.all()
        kind = self.request.query_params.get('kind')
        if kind:
            queryset = queryset.filter(kind=kind)
        status = self.request.query_params.get('status')
        if status:
            queryset = queryset.filter(status=status)
        return queryset
