from django.contrib import admin

from .models import ExperimentResult, ExperimentRun


class ExperimentResultInline(admin.TabularInline):
    model = ExperimentResult
    extra = 0
    readonly_fields = ('seed', 'pipeline', 'ap_base', 'ap_extra', 'ap_match', 'mr_base', 'mr_extra', 'mr_match')
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'preset', 'ablation', 'status', 'created_at', 'updated_at')
    list_filter = ('preset', 'ablation', 'status')
    readonly_fields = ('status', 'error', 'created_at', 'updated_at')
    inlines = [ExperimentResultInline]


@admin.register(ExperimentResult)
class ExperimentResultAdmin(admin.ModelAdmin):
    list_display = ('run', 'seed', 'pipeline', 'ap_match', 'mr_match')
    list_filter = ('pipeline',)
    search_fields = ('pipeline',)
