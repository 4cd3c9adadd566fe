"""Indoor LoRa simulator: CSS modem, constructive-interference analysis and LoRaIN network simulation."""

__version__ = "0.1.0"
