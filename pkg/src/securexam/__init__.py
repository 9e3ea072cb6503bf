"""Secure electronic-examination platform.

Sealed exam packages travel signed and encrypted to examination centers;
candidates sit timed sessions under lockdown attestation; objective scripts
grade automatically; results release through single-use scratch-card PINs
after an embargo.
"""

from .errors import SecurexamError

__version__ = "0.1.0"

__all__ = ["SecurexamError", "__version__"]
