from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """Read-mostly admin for archived laboratory runs."""

    list_display = ['command', 'status', 'exit_code', 'seed', 'version', 'created']
    list_filter = ['command', 'status', 'created']
    search_fields = ['command', 'status', 'version']
    readonly_fields = ['id', 'created', 'modified', 'config', 'report']
    ordering = ['-created']

    fieldsets = (
        (None, {
            'fields': ('command', 'status', 'exit_code', 'seed', 'version')
        }),
        ('Documents', {
            'fields': ('config', 'report')
        }),
        ('Metadata', {
            'fields': ('id', 'metadata', 'created', 'modified'),
            'classes': ('collapse',)
        }),
    )
