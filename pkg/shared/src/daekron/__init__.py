"""daekron shared package - configuration, errors, and document schemas."""
