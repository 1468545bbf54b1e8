"""From-scratch actor-critic training for the swing-up task."""
