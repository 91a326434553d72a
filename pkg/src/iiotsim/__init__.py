"""iiotsim: a deterministic, software-only industrial-IoT security testbed.

Simulates the plant (sensors, actuators, a threshold PLC), the edge gateway
(polling, deadband forwarding, historian, CoAP/API services), a cloud MQTT
broker with historian, scripted attacks with ground-truth windows, and the
downstream analytics: conversation logs, performance metrics, a labeled
dataset, intrusion-detection models and a threat-hunting query engine.
"""

__version__ = "0.1.0"

from . import (analytics, attacks, cloud, detect, fieldbus, gateway, harness,
               historian, hunt, netsim, plan, plant, services)

__all__ = ["analytics", "attacks", "cloud", "detect", "fieldbus", "gateway",
           "harness", "historian", "hunt", "netsim", "plan", "plant",
           "services", "__version__"]
