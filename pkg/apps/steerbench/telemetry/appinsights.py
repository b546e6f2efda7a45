import logging
from typing import Optional

from azure.monitor.opentelemetry.exporter import (
    AzureMonitorLogExporter,
    AzureMonitorMetricExporter,
    AzureMonitorTraceExporter,
)
from opentelemetry._logs import set_logger_provider
from opentelemetry.metrics import set_meter_provider
from opentelemetry.sdk._logs import LoggerProvider, LoggingHandler
from opentelemetry.sdk._logs.export import BatchLogRecordProcessor
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader
from opentelemetry.sdk.metrics.view import DropAggregation, View
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor
from opentelemetry.semconv.resource import ResourceAttributes
from opentelemetry.trace import set_tracer_provider

from steerability.settings import appinsights_connection_string

SERVICE_NAME = "steerbench"
LOGGER_NAMESPACE = "steerability"
INSTRUMENT_PREFIX = "steerbench"
EXPORT_INTERVAL_MILLIS = 5000


class AzureMonitor:
    """
    Export the harness's logs, spans and metrics to Application Insights.
    """

    def __init__(self, connection_string: str, service_name: str = SERVICE_NAME):
        """
        Initialize the exporter configuration.

        Args:
            connection_string (str): The connection string for the Application Insights resource.
            service_name (str): Service name attached to every exported record.
        """
        self.connection_string = connection_string
        self.logger = logging.getLogger(__name__)
        self.resource = Resource.create({ResourceAttributes.SERVICE_NAME: service_name})

    def set_up_logging(self, level: int = logging.INFO):
        """Forward records from the steerability loggers to Azure Monitor."""
        self.logger.info("Setting up logging")
        logger_provider = LoggerProvider(resource=self.resource)
        logger_provider.add_log_record_processor(
            BatchLogRecordProcessor(AzureMonitorLogExporter(connection_string=self.connection_string))
        )
        set_logger_provider(logger_provider)

        handler = LoggingHandler(logger_provider=logger_provider)
        # Only harness records; HTTP and SDK chatter stays local
        handler.addFilter(logging.Filter(LOGGER_NAMESPACE))
        root = logging.getLogger()
        root.addHandler(handler)
        root.setLevel(min(root.level or level, level))

    def set_up_tracing(self):
        """Export the chat-completion spans."""
        self.logger.info("Setting up tracing")
        tracer_provider = TracerProvider(resource=self.resource)
        tracer_provider.add_span_processor(
            BatchSpanProcessor(AzureMonitorTraceExporter(connection_string=self.connection_string))
        )
        set_tracer_provider(tracer_provider)

    def set_up_metrics(self):
        """Export request and retry counters; every other instrument is dropped."""
        self.logger.info("Setting up metrics")
        exporter = AzureMonitorMetricExporter(connection_string=self.connection_string)
        meter_provider = MeterProvider(
            metric_readers=[PeriodicExportingMetricReader(exporter, export_interval_millis=EXPORT_INTERVAL_MILLIS)],
            resource=self.resource,
            views=[
                View(instrument_name="*", aggregation=DropAggregation()),
                View(instrument_name=f"{INSTRUMENT_PREFIX}*"),
            ],
        )
        set_meter_provider(meter_provider)

    def configure(self):
        self.logger.info("Configuring Application Insights")
        self.set_up_logging()
        self.set_up_tracing()
        self.set_up_metrics()
        self.logger.info("Application Insights configuration complete")


def configure_application_insights(connection_string: Optional[str] = None) -> bool:
    """
    Configure Application Insights when a connection string is available.

    Args:
        connection_string (str): Overrides APPLICATIONINSIGHTS_CONNECTION_STRING.

    Returns:
        True when telemetry export was configured
    """
    connection_string = connection_string or appinsights_connection_string()
    if not connection_string:
        logging.getLogger(__name__).debug("APPLICATIONINSIGHTS_CONNECTION_STRING not set; telemetry stays local")
        return False
    AzureMonitor(connection_string).configure()
    return True
