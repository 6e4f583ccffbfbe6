class PathoGANError(Exception):
    """Root of every error raised by the toolkit"""
    pass


class ConfigError(PathoGANError):
    """Invalid configuration file, unknown key or bad override"""
    pass
