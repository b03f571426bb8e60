"""Wire protocol, server daemon, client adapters and snapshot persistence."""
