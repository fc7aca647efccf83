# Set-indexed Hölder regularity toolkit
__version__ = "0.1.0"
