from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'kind', 'seed', 'status', 'output_path', 'created_at')
    list_filter = ('kind', 'status')
    readonly_fields = ('config', 'summary', 'created_at', 'updated_at')
