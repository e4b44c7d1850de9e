"""Configuration models"""
