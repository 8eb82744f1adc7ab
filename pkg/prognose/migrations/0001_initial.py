# Generated by Django 4.2.26 on 2026-10-17 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ForecastRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Gestartet am')),
                ('config_hash', models.CharField(help_text='SHA-256 der kanonischen Lauf-Konfiguration.', max_length=64, verbose_name='Konfigurations-Hash')),
                ('config', models.JSONField(default=dict, verbose_name='Konfiguration')),
                ('output_dir', models.CharField(max_length=500, verbose_name='Ausgabeverzeichnis')),
                ('seed', models.BigIntegerField(verbose_name='Master-Saat')),
                ('status', models.CharField(choices=[('RUNNING', 'Läuft'), ('DONE', 'Fertig'), ('FAILED', 'Fehlgeschlagen')], default='RUNNING', max_length=10, verbose_name='Status')),
                ('error_message', models.TextField(blank=True, verbose_name='Fehlermeldung')),
                ('finished_at', models.DateTimeField(blank=True, null=True, verbose_name='Beendet am')),
            ],
            options={
                'verbose_name': 'Prognoselauf',
                'verbose_name_plural': 'Prognoseläufe',
                'ordering': ['-created_at', '-id'],
            },
        ),
        migrations.CreateModel(
            name='EvaluationResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('model_name', models.CharField(max_length=50, verbose_name='Modell')),
                ('period', models.CharField(max_length=50, verbose_name='Zeitraum')),
                ('pinball', models.FloatField(verbose_name='Pinball-Verlust')),
                ('rmse', models.FloatField(verbose_name='RMSE')),
                ('n_cells', models.PositiveIntegerField(default=0, help_text='Ausgewertete (Kreis, Tag)-Zellen.', verbose_name='Zellen')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='prognose.forecastrun', verbose_name='Lauf')),
            ],
            options={
                'verbose_name': 'Auswertung',
                'verbose_name_plural': 'Auswertungen',
                'ordering': ['run', 'id'],
            },
        ),
        migrations.AddConstraint(
            model_name='evaluationresult',
            constraint=models.UniqueConstraint(fields=('run', 'model_name', 'period'), name='unique_result_per_run'),
        ),
    ]
